"""Bayesian complementary clustering of multi-type planar point patterns.

Clusters hold at most one point per type; the posterior over such partitions
is a distribution over matchings in a complete k-partite hypergraph, sampled
by Metropolis-within-Gibbs with informed edge proposals, Gibbs-projection
kernels for three or more colors, simulated tempering against multimodality,
and grid-parallel multiple proposals on truncated models.
"""

from .patterns import (
    ClusterStatsCache,
    ClusterSummary,
    MarkedPoint,
    Matching,
    MoveKind,
    ObservationWindow,
    PointPattern,
    cluster_size_counts,
    move_apply,
    move_classify,
    partition_stats,
)
from .model import (
    CenterDensity,
    Hyperparams,
    ModelParams,
    cluster_log_likelihood,
    gibbs_update_lambda,
    gibbs_update_p,
    hyperedge_log_weight,
    log_posterior_partition,
    mh_update_sigma,
    sigma_log_conditional,
    size_constant,
)
from .sampler2 import (
    P1,
    P2,
    P3,
    P4,
    Chain2State,
    ProposalGrid,
    ProposalKind,
    TemperingLadder,
    WeightTable,
    build_weight_table,
    draw_proposal,
    hungarian_mode,
    mh_step2,
    multiproposal_step,
    run_chain2,
    run_tempered2,
    tempering_step,
)
from .samplerk import (
    ChainStateK,
    ProjectedPattern,
    SampleStore,
    SamplerKConfig,
    Superpoint,
    gibbs_sweep_k,
    lift,
    project,
    projected_edge_weight,
    projected_weight_table,
    projection_kernel_step,
    run_mcmc_k,
    sample_color_subset,
)
from .intensity import IntensityField, kde_intensity, lscv_bandwidth, normalize_to_density
from .kcross import KEstimate, deviation_test, kcross_inhom, lcross_aggregate, simulate_null_poisson
from .synth import simulate_csri, simulate_model
from .diagnostics import (
    association_measure,
    brooks_gelman_psrf,
    cluster_size_posterior,
    comembership_matrix,
    hpd_interval,
    iat_ess,
    proximity_D,
)
from .osgrid import OSGridError, parse_osgrid
from .ingest import ingest_and_clean, read_records

__version__ = "0.1.0"
