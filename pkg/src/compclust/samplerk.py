"""k-color sampler: Gibbs-projection kernels plus conditional parameter updates.

A kernel application draws a uniform color subset A of size floor(k/2),
collapses every cluster into its A-side and complement-side fragments
(superpoints with multiplicities), runs two-color MH moves against a
multiplicity-corrected pair table and lifts the result back to a k-color
partition. A full sweep follows with the conditional updates of sigma, the
size distribution and the cluster-count rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _engine
from .model import (
    CenterDensity,
    Hyperparams,
    ModelParams,
    gibbs_update_lambda,
    gibbs_update_p,
    log_posterior_partition,
    mh_update_sigma,
    size_constant,
)
from .patterns import Matching, PointPattern, cluster_size_counts
from .sampler2 import P3, Chain2State, ProposalKind, WeightTable, mh_step2

__all__ = [
    "Superpoint",
    "ProjectedPattern",
    "sample_color_subset",
    "project",
    "lift",
    "projected_edge_weight",
    "projected_weight_table",
    "ChainStateK",
    "projection_kernel_step",
    "SamplerKConfig",
    "gibbs_sweep_k",
    "SampleStore",
    "run_mcmc_k",
]

_FORCED_MERGE_W = 1e30


@dataclass(frozen=True)
class Superpoint:
    """A cluster fragment: centroid of the underlying points, their count,
    the side of the color split it belongs to, and the point indices."""

    centroid: tuple[float, float]
    mult: int
    side: str  # "A" or "Ac"
    members: tuple[int, ...]


@dataclass
class ProjectedPattern:
    """Two-color reduction of (pattern, rho) under the color subset A."""

    A: frozenset
    reds: list[Superpoint]
    blues: list[Superpoint]
    edges: list[tuple[int, int]]  # (red local index, blue local index)
    pattern: PointPattern

    def multiplicity_total(self) -> int:
        return sum(s.mult for s in self.reds) + sum(s.mult for s in self.blues)


def sample_color_subset(k: int, rng: np.random.Generator) -> frozenset:
    """Uniform subset of size floor(k/2) of the colors {1..k}."""
    if k < 2:
        raise ValueError("need at least 2 colors")
    pick = rng.choice(k, size=k // 2, replace=False)
    return frozenset(int(c) + 1 for c in pick)


def project(pattern: PointPattern, rho: Matching, A: frozenset) -> ProjectedPattern:
    """Split every cluster into its A and A-complement fragments.

    Each nonempty fragment becomes one superpoint at the fragment centroid;
    the 2-color matching links the two fragments of any cluster that has
    points on both sides. Superpoints are ordered by minimal member index.
    """
    in_A = np.isin(pattern.marks, list(A))
    reds: list[Superpoint] = []
    blues: list[Superpoint] = []
    edges: list[tuple[int, int]] = []
    for cluster in rho.clusters():  # sorted by minimal member
        part_a = sorted(i for i in cluster if in_A[i])
        part_b = sorted(i for i in cluster if not in_A[i])
        ra = rb = -1
        if part_a:
            c = pattern.xy[part_a].mean(axis=0)
            ra = len(reds)
            reds.append(Superpoint((float(c[0]), float(c[1])), len(part_a), "A", tuple(part_a)))
        if part_b:
            c = pattern.xy[part_b].mean(axis=0)
            rb = len(blues)
            blues.append(Superpoint((float(c[0]), float(c[1])), len(part_b), "Ac", tuple(part_b)))
        if ra >= 0 and rb >= 0:
            edges.append((ra, rb))
    return ProjectedPattern(A=frozenset(A), reds=reds, blues=blues, edges=edges, pattern=pattern)


def lift(proj: ProjectedPattern, edges: list[tuple[int, int]] | None = None) -> Matching:
    """Rebuild the k-color matching from a 2-color matching over superpoints."""
    if edges is None:
        edges = proj.edges
    pattern = proj.pattern
    out = Matching.empty(pattern)
    linked_r = set()
    linked_b = set()
    for ra, rb in edges:
        members = proj.reds[ra].members + proj.blues[rb].members
        if len(members) >= 2:
            out.add_edge(members)
        linked_r.add(ra)
        linked_b.add(rb)
    for i, sp in enumerate(proj.reds):
        if i not in linked_r and sp.mult >= 2:
            out.add_edge(sp.members)
    for j, sp in enumerate(proj.blues):
        if j not in linked_b and sp.mult >= 2:
            out.add_edge(sp.members)
    return out


def projected_edge_weight(sp_i: Superpoint, sp_j: Superpoint, params: ModelParams,
                          g: CenterDensity, k: int) -> float:
    """Posterior ratio of merging two opposite-side superpoints.

    Multiplicity-corrected pair weight; reduces to the plain pair weight when
    both multiplicities are one. Inadmissible merges (joint size above k or a
    size with zero prior mass) have weight zero.
    """
    if sp_i.side == sp_j.side:
        raise ValueError("superpoints must lie on opposite sides")
    di, dj = sp_i.mult, sp_j.mult
    d = di + dj
    if d > k:
        return 0.0
    p = params.p_sizes
    if p[d - 1] <= 0:
        return 0.0
    xi = np.array(sp_i.centroid)
    xj = np.array(sp_j.centroid)
    xm = (di * xi + dj * xj) / d
    gm = float(g(xm[None, :])[0])
    if gm <= 0:
        return 0.0
    gi = float(g(xi[None, :])[0])
    gj = float(g(xj[None, :])[0])
    if gi <= 0 or gj <= 0 or p[di - 1] <= 0 or p[dj - 1] <= 0:
        return _FORCED_MERGE_W
    dist2 = float(((xi - xj) ** 2).sum())
    w = (
        p[d - 1] * size_constant(k, di) * size_constant(k, dj)
        / (params.lam * p[di - 1] * p[dj - 1] * size_constant(k, d))
        * gm / (gi * gj)
        / params.sigma**2
        * math.exp(-math.pi * di * dj * dist2 / (2.0 * params.sigma**2 * d))
    )
    return min(w, _FORCED_MERGE_W)


def projected_weight_table(proj: ProjectedPattern, params: ModelParams, g: CenterDensity,
                           r_max: float | None = None) -> WeightTable:
    """Dense superpoint pair table (the Python reference of the engine's builder)."""
    k = proj.pattern.k
    n1, n2 = len(proj.reds), len(proj.blues)
    w = np.zeros((n1, n2))
    for i, spi in enumerate(proj.reds):
        for j, spj in enumerate(proj.blues):
            if r_max is not None:
                dist2 = (spi.centroid[0] - spj.centroid[0]) ** 2 + (
                    spi.centroid[1] - spj.centroid[1]) ** 2
                if dist2 >= r_max * r_max:
                    continue
            w[i, j] = projected_edge_weight(spi, spj, params, g, k)
    xy_red = np.array([s.centroid for s in proj.reds]) if n1 else np.zeros((0, 2))
    xy_blue = np.array([s.centroid for s in proj.blues]) if n2 else np.zeros((0, 2))
    return WeightTable(w, r_max=r_max, xy_red=xy_red, xy_blue=xy_blue)


@dataclass
class ChainStateK:
    """One k-color MCMC state: matching plus the continuous parameters."""

    pattern: PointPattern
    g: CenterDensity
    hyper: Hyperparams
    matching: Matching
    params: ModelParams

    @classmethod
    def initial(cls, pattern: PointPattern, g: CenterDensity, hyper: Hyperparams,
                rng: np.random.Generator | None = None) -> "ChainStateK":
        k = pattern.k
        alpha = hyper.alpha_for(k)
        if rng is None:
            params = ModelParams(
                sigma=hyper.sigma_max / 2.0,
                p_sizes=alpha / alpha.sum(),
                lam=hyper.lambda_shape * hyper.lambda_scale,
            )
        else:
            params = ModelParams(
                sigma=float(rng.uniform(0, hyper.sigma_max)),
                p_sizes=rng.dirichlet(alpha),
                lam=float(rng.gamma(hyper.lambda_shape, hyper.lambda_scale)),
            )
        return cls(pattern, g, hyper, Matching.empty(pattern), params)

    def log_posterior(self) -> float:
        return log_posterior_partition(self.pattern, self.matching, self.params, self.g)


def _matching_from_labels(pattern: PointPattern, labels: np.ndarray) -> Matching:
    groups: dict[int, list[int]] = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(i)
    return Matching.from_edges(pattern, [m for m in groups.values() if len(m) >= 2])


def projection_kernel_step(state: ChainStateK, A: frozenset, n_moves: int,
                           kind: ProposalKind, rng: np.random.Generator,
                           r_max: float | None = None) -> ChainStateK:
    """Apply the projection kernel P^(A): project, move, lift.

    The pair table is rebuilt here because it depends on the current sigma,
    size distribution and rate.
    """
    pattern = state.pattern
    k = pattern.k
    Amask = np.zeros(k, dtype=np.bool_)
    for c in A:
        Amask[c - 1] = True
    cl = state.matching.labels()
    csz = np.array([size_constant(k, s) for s in range(1, k + 1)])
    gv, gx0, gy0, gdx, gdy = state.g.grid_arrays()
    seed = int(rng.integers(0, 2**31 - 1))
    _engine.projection_apply_seeded(
        seed, pattern.xy, pattern.marks, k, cl, Amask,
        state.params.sigma, state.params.p_sizes, state.params.lam, csz,
        gv, gx0, gy0, gdx, gdy,
        -1.0 if r_max is None else float(r_max),
        n_moves, kind.kind_id, kind.delta)
    state.matching = _matching_from_labels(pattern, cl)
    return state


@dataclass
class SamplerKConfig:
    """Sweep settings: inner-move count and proposal kind of the projection
    step, truncation radius, and the sigma random-walk controls."""

    n_moves: int = 200
    kind: ProposalKind = P3
    r_max: float | None = None
    sigma_step: float = 0.1
    sigma_inner: int = 5


def gibbs_sweep_k(state: ChainStateK, config: SamplerKConfig,
                  rng: np.random.Generator) -> ChainStateK:
    """One Metropolis-within-Gibbs sweep: partition, sigma, p, lambda."""
    pattern = state.pattern
    A = sample_color_subset(pattern.k, rng)
    state = projection_kernel_step(state, A, config.n_moves, config.kind, rng,
                                   r_max=config.r_max)
    params = state.params
    sigma = mh_update_sigma(pattern, state.matching, params.sigma,
                            state.hyper.sigma_max, rng,
                            step_scale=config.sigma_step, n_inner=config.sigma_inner)
    p_new = gibbs_update_p(state.matching, state.hyper.alpha_for(pattern.k), rng)
    lam_new = gibbs_update_lambda(state.matching, state.hyper.lambda_shape,
                                  state.hyper.lambda_scale, rng)
    state.params = ModelParams(sigma=sigma, p_sizes=p_new, lam=lam_new)
    return state


@dataclass
class SampleStore:
    """Recorded sweeps of one chain."""

    k: int
    n: int
    sigma: np.ndarray
    lam: np.ndarray
    p: np.ndarray
    n_clusters: np.ndarray
    Y: np.ndarray
    labels: np.ndarray
    logpi: np.ndarray
    thin: int = 1
    seed: int | None = None

    @property
    def n_samples(self) -> int:
        return self.sigma.size

    def matchings(self, pattern: PointPattern):
        for row in self.labels:
            yield _matching_from_labels(pattern, row)


def run_mcmc_k(pattern: PointPattern, g: CenterDensity, hyper: Hyperparams, *,
               sweeps: int, burn: int = 0, thin: int = 1, seed=0,
               config: SamplerKConfig | None = None,
               init: ChainStateK | None = None,
               randomize_init: bool = False) -> SampleStore:
    """Run one chain and record every `thin`-th sweep after burn-in."""
    config = config or SamplerKConfig()
    rng = np.random.default_rng(seed)
    state = init or ChainStateK.initial(pattern, g, hyper,
                                        rng if randomize_init else None)
    k, n = pattern.k, pattern.n
    n_rec = sweeps // thin
    out_sigma = np.empty(n_rec)
    out_lam = np.empty(n_rec)
    out_p = np.empty((n_rec, k))
    out_N = np.empty(n_rec, dtype=np.int64)
    out_Y = np.empty((n_rec, k), dtype=np.int64)
    out_labels = np.empty((n_rec, n), dtype=np.int64)
    out_logpi = np.empty(n_rec)
    for _ in range(burn):
        state = gibbs_sweep_k(state, config, rng)
    rec = 0
    for t in range(sweeps):
        state = gibbs_sweep_k(state, config, rng)
        if (t + 1) % thin == 0:
            N, Y = cluster_size_counts(state.matching, k)
            out_sigma[rec] = state.params.sigma
            out_lam[rec] = state.params.lam
            out_p[rec] = state.params.p_sizes
            out_N[rec] = state.matching.n_clusters
            out_Y[rec] = Y
            out_labels[rec] = state.matching.labels()
            out_logpi[rec] = state.log_posterior()
            rec += 1
    return SampleStore(k=k, n=n, sigma=out_sigma, lam=out_lam, p=out_p,
                       n_clusters=out_N, Y=out_Y, labels=out_labels,
                       logpi=out_logpi, thin=thin, seed=seed)


def run_projection_chain(pattern: PointPattern, params: ModelParams, g: CenterDensity, *,
                         n_apps: int, n_moves: int = 1, kind: ProposalKind = P3,
                         seed=0, r_max: float | None = None,
                         init_matching: Matching | None = None,
                         record_visits: bool = True):
    """Repeated kernel applications with sigma, p, lambda held fixed.

    Returns (visits, acceptance_count) where visits maps the
    restricted-growth code of the partition to its occupation count.
    """
    k = pattern.k
    cl = (init_matching or Matching.empty(pattern)).labels()
    csz = np.array([size_constant(k, s) for s in range(1, k + 1)])
    gv, gx0, gy0, gdx, gdy = g.grid_arrays()
    eng_seed = int(np.random.SeedSequence(seed).generate_state(1, dtype=np.uint32)[0])
    n_acc, visits = _engine.run_projection_chain(
        eng_seed, n_apps, n_moves, kind.kind_id, pattern.xy, pattern.marks, k, cl,
        params.sigma, params.p_sizes, params.lam, csz, gv, gx0, gy0, gdx, gdy,
        -1.0 if r_max is None else float(r_max), kind.delta, record_visits)
    return {int(c): int(v) for c, v in visits.items()}, int(n_acc)


def rgs_code_of(labels: np.ndarray) -> int:
    """Restricted-growth integer code of a label vector (matches the engine)."""
    n = len(labels)
    mapping: dict[int, int] = {}
    code = 0
    for lab in labels:
        d = mapping.setdefault(int(lab), len(mapping))
        code = code * n + d
    return code
