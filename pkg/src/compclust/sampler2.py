"""Two-color Metropolis-Hastings sampler over bipartite matchings.

The chain moves by the five-case edge move (addition, deletion, two switches,
double switch). Four proposal families select the move edge:

  P1  uniform over edges whose weight exceeds a threshold delta (the target
      becomes the delta-thresholded model),
  P2  proportional to the target of the proposed state,
  P3  Barker ratio pi(new)/(pi(old)+pi(new)),
  P4  precomputed state-independent add/remove tables.

Acceptance always uses the exact reverse-move selection probability with its
state-dependent normalization; a double switch is reachable through two edge
selections in each direction and both are summed. `mh_step2` performs one
step in plain Python (quadratic but transparent); `run_chain2` drives the
compiled kernels in `_engine` for long runs and is held to the same law by
the enumeration tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _engine
from .model import CenterDensity, ModelParams, size_constant
from .patterns import Matching, PointPattern

__all__ = [
    "ProposalKind",
    "P1",
    "P2",
    "P3",
    "P4",
    "WeightTable",
    "build_weight_table",
    "Chain2State",
    "draw_proposal",
    "mh_step2",
    "run_chain2",
    "ChainRun",
    "hungarian_mode",
    "ModeResult",
    "TemperingLadder",
    "tempering_step",
    "run_tempered2",
    "TemperedRun",
    "ProposalGrid",
    "multiproposal_step",
]

_KIND_IDS = {"P1": 1, "P2": 2, "P3": 3, "P4": 4}
_CAP = 1e250
_FORCED_MERGE_W = 1e30


@dataclass(frozen=True)
class ProposalKind:
    """Proposal family P1(delta), P2, P3 or P4."""

    name: str
    delta: float = 0.0

    def __post_init__(self):
        if self.name not in _KIND_IDS:
            raise ValueError(f"unknown proposal kind {self.name!r}")
        if self.name == "P1" and self.delta <= 0:
            raise ValueError("P1 requires a threshold delta > 0")

    @property
    def kind_id(self) -> int:
        return _KIND_IDS[self.name]


def P1(delta: float) -> ProposalKind:
    return ProposalKind("P1", delta)


P2 = ProposalKind("P2")
P3 = ProposalKind("P3")
P4 = ProposalKind("P4")


class WeightTable:
    """Dense edge-weight matrix over red x blue points.

    Entries at distance >= r_max are exactly zero when a truncation radius is
    given. The kind-4 add/remove tables are derived lazily and cached.
    """

    def __init__(self, w, r_max=None, red_points=None, blue_points=None,
                 xy_red=None, xy_blue=None):
        self.w = np.ascontiguousarray(np.asarray(w, dtype=float))
        if self.w.ndim != 2:
            raise ValueError("weight table must be 2-d")
        if np.any(self.w < 0) or not np.all(np.isfinite(self.w)):
            raise ValueError("weights must be finite and nonnegative")
        self.r_max = None if r_max is None else float(r_max)
        self.red_points = red_points
        self.blue_points = blue_points
        self.xy_red = None if xy_red is None else np.asarray(xy_red, dtype=float)
        self.xy_blue = None if xy_blue is None else np.asarray(xy_blue, dtype=float)
        with np.errstate(divide="ignore"):
            self.logw = np.log(self.w)
        self._p4 = None

    @classmethod
    def from_matrix(cls, w, r_max=None) -> "WeightTable":
        return cls(w, r_max=r_max)

    @property
    def shape(self):
        return self.w.shape

    def p4_tables(self):
        """(q_add, q_rem) of proposal kind 4; q_rem = w^(-1/2) on the support."""
        if self._p4 is None:
            self._p4 = _engine._build_p4(self.w)
        return self._p4

    def effective(self, kind: ProposalKind):
        """Weights defining the target the chain with this kind samples.

        P1's thresholding zeroes every entry <= delta; other kinds use the
        table as is.
        """
        if kind.name == "P1":
            w = np.where(self.w > kind.delta, self.w, 0.0)
            with np.errstate(divide="ignore"):
                return np.ascontiguousarray(w), np.log(w)
        return self.w, self.logw


def build_weight_table(pattern: PointPattern, params: ModelParams, g: CenterDensity,
                       r_max: float | None = None) -> WeightTable:
    """Pairwise hyperedge weights of a two-color pattern, optionally truncated."""
    if pattern.k != 2:
        raise ValueError("build_weight_table requires exactly 2 colors")
    reds = pattern.indices_of_mark(1)
    blues = pattern.indices_of_mark(2)
    xr = pattern.xy[reds]
    xb = pattern.xy[blues]
    gi = g(xr)
    gj = g(xb)
    mid = 0.5 * (xr[:, None, :] + xb[None, :, :])
    gm = g(mid.reshape(-1, 2)).reshape(len(reds), len(blues))
    d2 = ((xr[:, None, :] - xb[None, :, :]) ** 2).sum(axis=2)
    c1 = size_constant(2, 1)
    c2 = size_constant(2, 2)
    p = params.p_sizes
    const = (c1 * c1 * p[1]) / (c2 * p[0] * p[0] * params.lam * params.sigma**2)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = const * gm / (gi[:, None] * gj[None, :]) * np.exp(
            -math.pi * d2 / (4.0 * params.sigma**2)
        )
    # a point where g vanishes cannot stand alone: force the merge
    bad = (gi[:, None] <= 0) | (gj[None, :] <= 0)
    w = np.where(bad & (gm > 0), _FORCED_MERGE_W, w)
    w = np.minimum(np.nan_to_num(w, nan=0.0, posinf=_FORCED_MERGE_W), _FORCED_MERGE_W)
    if r_max is not None:
        w[d2 >= r_max * r_max] = 0.0
    return WeightTable(w, r_max=r_max, red_points=reds, blue_points=blues,
                       xy_red=xr, xy_blue=xb)


class Chain2State:
    """Mutable chain state: partner arrays, cached log posterior."""

    def __init__(self, table: WeightTable, kind: ProposalKind, pr=None, pb=None):
        n1, n2 = table.shape
        self.table = table
        self.kind = kind
        self.pr = np.full(n1, -1, dtype=np.int64) if pr is None else np.asarray(pr, dtype=np.int64).copy()
        self.pb = np.full(n2, -1, dtype=np.int64) if pb is None else np.asarray(pb, dtype=np.int64).copy()
        self._w_eff, self._logw_eff = table.effective(kind)
        self.logpi = self._recompute_logpi()
        self.held_steps = 0

    @classmethod
    def empty(cls, table: WeightTable, kind: ProposalKind) -> "Chain2State":
        return cls(table, kind)

    @classmethod
    def from_pairs(cls, table: WeightTable, kind: ProposalKind, pairs) -> "Chain2State":
        n1, n2 = table.shape
        pr = np.full(n1, -1, dtype=np.int64)
        pb = np.full(n2, -1, dtype=np.int64)
        for i, j in pairs:
            if pr[i] >= 0 or pb[j] >= 0:
                raise ValueError("pairs do not form a matching")
            pr[i] = j
            pb[j] = i
        return cls(table, kind, pr, pb)

    def _recompute_logpi(self) -> float:
        lp = 0.0
        for a in range(self.pr.shape[0]):
            if self.pr[a] >= 0:
                lp += self._logw_eff[a, self.pr[a]]
        return lp

    def pairs(self) -> list[tuple[int, int]]:
        return sorted((int(a), int(j)) for a, j in enumerate(self.pr) if j >= 0)

    def copy(self) -> "Chain2State":
        return Chain2State(self.table, self.kind, self.pr, self.pb)


def move_ratio_matrix(pr, pb, w) -> np.ndarray:
    """pi(rho∘(a,b))/pi(rho) for every edge (a,b), vectorized."""
    n1, n2 = w.shape
    rows = np.arange(n1)
    cols = np.arange(n2)
    m_r = pr >= 0
    m_b = pb >= 0
    den_i = np.ones(n1)
    den_i[m_r] = w[rows[m_r], pr[m_r]]
    den_j = np.ones(n2)
    den_j[m_b] = w[pb[m_b], cols[m_b]]
    cross = np.ones((n1, n2))
    if m_r.any() and m_b.any():
        ri = rows[m_r]
        bj = cols[m_b]
        cross[np.ix_(ri, bj)] = w[pb[bj][None, :], pr[ri][:, None]]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = w * cross / (den_i[:, None] * den_j[None, :])
        ratio = np.nan_to_num(ratio, nan=0.0, posinf=_CAP)
    # deletion entries: removing the matched edge divides by its weight
    matched = rows[m_r]
    ratio[matched, pr[m_r]] = 1.0 / w[matched, pr[m_r]]
    return ratio


def selection_mass_matrix(pr, pb, w_eff, kind: ProposalKind, table: WeightTable | None = None):
    """Unnormalized selection masses q(a, b) for the given proposal kind."""
    if kind.name == "P1":
        return (w_eff > 0).astype(float)
    if kind.name == "P4":
        q_add, q_rem = table.p4_tables()
        M = q_add.copy()
        m_r = pr >= 0
        rows = np.flatnonzero(m_r)
        M[rows, pr[rows]] = q_rem[rows, pr[rows]]
        return M
    r = move_ratio_matrix(pr, pb, w_eff)
    if kind.name == "P2":
        return np.minimum(r, _CAP)
    return np.where(r > _CAP, 1.0, r / (1.0 + r))


def draw_proposal(state: Chain2State, table: WeightTable, kind: ProposalKind,
                  rng: np.random.Generator):
    """Draw an edge from the normalized proposal; None when no move has mass.

    Returns (i, j, log q(i, j)) including the normalization.
    """
    w_eff, _ = table.effective(kind)
    M = selection_mass_matrix(state.pr, state.pb, w_eff, kind, table)
    Z = M.sum()
    if Z <= 0:
        return None
    flat = rng.choice(M.size, p=(M / Z).ravel())
    a, b = divmod(int(flat), M.shape[1])
    return a, b, float(np.log(M[a, b] / Z))


def _reverse_selections(mkind, a, b, ip, jp):
    if mkind in ("addition", "deletion"):
        return [(a, b)]
    if mkind == "switch_i":
        return [(a, jp)]
    if mkind == "switch_j":
        return [(ip, b)]
    return [(a, jp), (ip, b)]


def mh_step2(state: Chain2State, table: WeightTable, kind: ProposalKind,
             rng: np.random.Generator):
    """One exact MH step (plain Python reference path). Returns (state, accepted)."""
    w_eff, logw_eff = table.effective(kind)
    pr, pb = state.pr, state.pb
    M = selection_mass_matrix(pr, pb, w_eff, kind, table)
    Z = M.sum()
    if Z <= 0:
        state.held_steps += 1
        return state, False
    flat = rng.choice(M.size, p=(M / Z).ravel())
    a, b = divmod(int(flat), M.shape[1])

    jp = int(pr[a])
    ip = int(pb[b])
    if jp == b:
        mkind, ratio = "deletion", 1.0 / w_eff[a, b]
    elif jp < 0 and ip < 0:
        mkind, ratio = "addition", w_eff[a, b]
    elif jp >= 0 and ip < 0:
        mkind, ratio = "switch_i", w_eff[a, b] / w_eff[a, jp]
    elif jp < 0 and ip >= 0:
        mkind, ratio = "switch_j", w_eff[a, b] / w_eff[ip, b]
    else:
        mkind = "double_switch"
        ratio = (w_eff[a, b] * w_eff[ip, jp]) / (w_eff[a, jp] * w_eff[ip, b])
    mf = M[a, b]
    if mkind == "double_switch":
        mf += M[ip, jp]
    if not ratio > 0:
        return state, False

    pr2 = pr.copy()
    pb2 = pb.copy()
    if mkind == "addition":
        pr2[a] = b
        pb2[b] = a
    elif mkind == "deletion":
        pr2[a] = -1
        pb2[b] = -1
    elif mkind == "switch_i":
        pr2[a] = b
        pb2[b] = a
        pb2[jp] = -1
    elif mkind == "switch_j":
        pr2[a] = b
        pb2[b] = a
        pr2[ip] = -1
    else:
        pr2[a] = b
        pb2[b] = a
        pr2[ip] = jp
        pb2[jp] = ip

    M2 = selection_mass_matrix(pr2, pb2, w_eff, kind, table)
    Z2 = M2.sum()
    mr = sum(M2[x, y] for x, y in _reverse_selections(mkind, a, b, ip, jp))
    alpha = 0.0
    if Z2 > 0 and mf > 0:
        alpha = ratio * (mr / Z2) * (Z / mf)
    if rng.random() < alpha:
        state.pr = pr2
        state.pb = pb2
        if mkind == "addition":
            state.logpi += logw_eff[a, b]
        elif mkind == "deletion":
            state.logpi -= logw_eff[a, b]
        elif mkind == "switch_i":
            state.logpi += logw_eff[a, b] - logw_eff[a, jp]
        elif mkind == "switch_j":
            state.logpi += logw_eff[a, b] - logw_eff[ip, b]
        else:
            state.logpi += (logw_eff[a, b] + logw_eff[ip, jp]
                            - logw_eff[a, jp] - logw_eff[ip, b])
        return state, True
    return state, False


def _engine_seed(seed) -> int:
    return int(np.random.SeedSequence(seed).generate_state(1, dtype=np.uint32)[0])


@dataclass
class ChainRun:
    steps: int
    acc_rate: float
    visits: dict | None
    occupancy: np.ndarray | None
    trace_edges: np.ndarray | None
    trace_logpi: np.ndarray | None
    trace_diff: np.ndarray | None
    final: Chain2State
    logpi: float


def decode_matching_code(code: int, n1: int, n2: int) -> tuple:
    """Invert the engine's partner-vector encoding into a pairs tuple."""
    digits = []
    base = n2 + 1
    for _ in range(n1):
        digits.append(code % base)
        code //= base
    digits.reverse()
    return tuple((a, d - 1) for a, d in enumerate(digits) if d > 0)


def run_chain2(table: WeightTable, kind: ProposalKind, steps: int, *, seed,
               init: Chain2State | None = None, burn: int = 0, thin: int = 0,
               record_visits: bool = False, collect_occ: bool = False,
               ref_pairs=None, refresh_every: int = 100_000) -> ChainRun:
    """Drive the compiled chain for `steps` recorded steps after `burn`."""
    w_eff, logw_eff = table.effective(kind)
    n1, n2 = table.shape
    if kind.name == "P4":
        q_add, q_rem = table.p4_tables()
    else:
        q_add = np.zeros((1, 1))
        q_rem = np.zeros((1, 1))
    state = init if init is not None else Chain2State.empty(table, kind)
    pr = state.pr.copy()
    pb = state.pb.copy()
    ref_pr = np.full(0, -1, dtype=np.int64)
    if ref_pairs is not None:
        ref_pr = np.full(n1, -1, dtype=np.int64)
        for i, j in ref_pairs:
            ref_pr[i] = j
    ss = np.random.SeedSequence(seed)
    s_burn, s_main = ss.generate_state(2, dtype=np.uint32)
    if burn > 0:
        _engine.run_chain2(int(s_burn), burn, kind.kind_id, w_eff, logw_eff,
                           q_add, q_rem, pr, pb, 0, np.full(0, -1, dtype=np.int64),
                           False, False, refresh_every)
    n_acc, visits, occ, trace, logpi = _engine.run_chain2(
        int(s_main), steps, kind.kind_id, w_eff, logw_eff, q_add, q_rem, pr, pb,
        thin, ref_pr, record_visits, collect_occ, refresh_every)
    final = Chain2State(table, kind, pr, pb)
    vis = None
    if record_visits:
        vis = {decode_matching_code(int(c), n1, n2): int(v) for c, v in visits.items()}
    return ChainRun(
        steps=steps,
        acc_rate=n_acc / steps if steps else 0.0,
        visits=vis,
        occupancy=occ if collect_occ else None,
        trace_edges=trace[:, 0] if thin > 0 else None,
        trace_logpi=trace[:, 1] if thin > 0 else None,
        trace_diff=trace[:, 2] if thin > 0 else None,
        final=final,
        logpi=float(logpi),
    )


@dataclass(frozen=True)
class ModeResult:
    pairs: tuple
    log_weight: float

    def as_matching(self, pattern: PointPattern | None = None,
                    table: WeightTable | None = None) -> Matching:
        if pattern is not None and table is not None and table.red_points is not None:
            edges = [(int(table.red_points[i]), int(table.blue_points[j]))
                     for i, j in self.pairs]
            return Matching.from_edges(pattern, edges)
        n1 = max((i for i, _ in self.pairs), default=-1) + 1
        n2 = max((j for _, j in self.pairs), default=-1) + 1
        marks = np.array([1] * n1 + [2] * n2, dtype=np.int64)
        return Matching.from_edges(marks, [(i, n1 + j) for i, j in self.pairs], k=2)


def hungarian_mode(table: WeightTable) -> ModeResult:
    """Highest-weight partial matching via the assignment solver.

    Leaving a point unmatched costs nothing, so only edges with w > 1 can
    help; the rectangular assignment on log-benefits clipped at zero is
    equivalent to padding to a square problem with zero-cost non-assignment.
    """
    from scipy.optimize import linear_sum_assignment

    w = table.w
    benefit = np.where(w > 1.0, np.log(np.maximum(w, 1.0)), 0.0)
    ri, bj = linear_sum_assignment(benefit, maximize=True)
    pairs = tuple(sorted((int(i), int(j)) for i, j in zip(ri, bj) if w[i, j] > 1.0))
    logw = float(sum(math.log(w[i, j]) for i, j in pairs))
    return ModeResult(pairs=pairs, log_weight=logw)


@dataclass
class TemperingLadder:
    """Inverse temperatures 1 = beta_0 > ... > beta_m > 0 with log pseudo-priors."""

    betas: np.ndarray
    log_pseudo: np.ndarray | None = None
    rung: int = 0

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=float)
        if self.betas.size == 0:
            raise ValueError("ladder needs at least one rung")
        if abs(self.betas[0] - 1.0) > 1e-12:
            raise ValueError("betas[0] must be 1")
        if self.betas.size > 1 and np.any(np.diff(self.betas) >= 0):
            raise ValueError("betas must strictly decrease")
        if np.any(self.betas <= 0):
            raise ValueError("betas must be positive")
        if self.log_pseudo is None:
            self.log_pseudo = np.zeros_like(self.betas)
        else:
            self.log_pseudo = np.asarray(self.log_pseudo, dtype=float)
        if not 0 <= self.rung < self.betas.size:
            raise ValueError("rung out of range")

    @classmethod
    def geometric(cls, n_rungs: int = 6, beta_min: float = 0.2) -> "TemperingLadder":
        if n_rungs == 1:
            return cls(np.array([1.0]))
        betas = beta_min ** (np.arange(n_rungs) / (n_rungs - 1))
        return cls(betas)

    @property
    def n_rungs(self) -> int:
        return self.betas.size


def tempering_step(state: Chain2State, ladder: TemperingLadder, table: WeightTable,
                   kind: ProposalKind, rng: np.random.Generator, p_rung: float = 0.1):
    """One simulated-tempering step: a rung move or a within-rung MH move.

    The within-rung target flattens every weight to w^beta. Returns
    (state, moved) where moved reports an accepted move of either type.
    """
    if rng.random() < p_rung:
        prop = ladder.rung + (1 if rng.random() < 0.5 else -1)
        if not 0 <= prop < ladder.n_rungs:
            return state, False
        w_eff, logw_eff = table.effective(kind)
        base_logpi = sum(logw_eff[a, j] for a, j in enumerate(state.pr) if j >= 0)
        la = (ladder.betas[prop] - ladder.betas[ladder.rung]) * base_logpi
        la += ladder.log_pseudo[prop] - ladder.log_pseudo[ladder.rung]
        if math.log(rng.random()) < la:
            ladder.rung = prop
            return state, True
        return state, False
    w_eff, _ = table.effective(kind)
    beta = ladder.betas[ladder.rung]
    tempered = WeightTable(w_eff**beta, r_max=table.r_max)
    sub = Chain2State(tempered, kind, state.pr, state.pb)
    sub, accepted = mh_step2(sub, tempered, kind, rng)
    state.pr = sub.pr
    state.pb = sub.pb
    state.logpi = state._recompute_logpi()
    return state, accepted


@dataclass
class TemperedRun:
    steps: int
    acc_rate: float
    visits: dict | None
    rung_occupancy: np.ndarray
    mode_hit_step: int
    trace_rung: np.ndarray | None
    trace_logpi: np.ndarray | None
    final: Chain2State
    ladder: TemperingLadder


def run_tempered2(table: WeightTable, kind: ProposalKind, ladder: TemperingLadder,
                  steps: int, *, seed, init: Chain2State | None = None,
                  p_rung: float = 0.1, adapt_frac: float = 0.2,
                  adapt_c0: float = 0.5, thin: int = 0,
                  record_visits: bool = False, mode_pairs=None,
                  refresh_every: int = 100_000) -> TemperedRun:
    """Simulated-tempering run; pseudo-priors adapt during the first
    adapt_frac of the run to roughly equalize rung occupancy."""
    w_eff, logw_eff = table.effective(kind)
    n1, n2 = table.shape
    nr = ladder.n_rungs
    Wst = np.stack([w_eff**b for b in ladder.betas])
    if kind.name == "P4":
        qa, qr = zip(*(_engine._build_p4(Wst[r]) for r in range(nr)))
        qa_st = np.stack(qa)
        qr_st = np.stack(qr)
    else:
        qa_st = np.zeros((nr, 1, 1))
        qr_st = np.zeros((nr, 1, 1))
    state = init if init is not None else Chain2State.empty(table, kind)
    pr = state.pr.copy()
    pb = state.pb.copy()
    mode_pr = np.full(0, -1, dtype=np.int64)
    if mode_pairs is not None:
        mode_pr = np.full(n1, -1, dtype=np.int64)
        for i, j in mode_pairs:
            mode_pr[i] = j
    eta = ladder.log_pseudo.copy()
    adapt_until = int(adapt_frac * steps)
    n_acc, visits, rung_occ, mode_hit, trace, eta = _engine.run_tempered2(
        _engine_seed(seed), steps, kind.kind_id, Wst, logw_eff, qa_st, qr_st,
        pr, pb, ladder.betas, eta, ladder.rung, p_rung, adapt_until,
        adapt_c0, max(1.0, steps / 50.0), thin, record_visits, mode_pr,
        refresh_every)
    ladder_out = TemperingLadder(ladder.betas.copy(), eta, rung=ladder.rung)
    vis = None
    if record_visits:
        vis = {decode_matching_code(int(c), n1, n2): int(v) for c, v in visits.items()}
    return TemperedRun(
        steps=steps,
        acc_rate=n_acc / steps if steps else 0.0,
        visits=vis,
        rung_occupancy=rung_occ,
        mode_hit_step=int(mode_hit),
        trace_rung=trace[:, 0] if thin > 0 else None,
        trace_logpi=trace[:, 1] if thin > 0 else None,
        final=Chain2State(table, kind, pr, pb),
        ladder=ladder_out,
    )


@dataclass(frozen=True)
class ProposalGrid:
    """Square tiling with an n x n coloring-class pattern for parallel moves.

    Tiles of the same class are separated by (n_classes - 1) * tile, which
    must cover twice the truncation radius so that moves anchored in distinct
    same-class tiles cannot share a point or a weight.
    """

    tile: float
    n_classes: int = 3
    offset: tuple | None = None

    def __post_init__(self):
        if self.tile <= 0 or self.n_classes < 2:
            raise ValueError("tile must be > 0 and n_classes >= 2")

    def check_compatible(self, r_max: float | None):
        if r_max is None:
            raise ValueError("multiple proposals require a truncated table (r_max set)")
        if (self.n_classes - 1) * self.tile < 2 * r_max:
            raise ValueError(
                "grid separation (n_classes-1)*tile must be >= 2*r_max")


def multiproposal_step(state: Chain2State, grid: ProposalGrid, table: WeightTable,
                       kind: ProposalKind, rng: np.random.Generator,
                       max_tiles: int | None = None):
    """Propose and accept one move per active tile of a random tile class.

    Each tile's proposal is restricted (and normalized) over edges with both
    endpoints inside the tile; tiles of one class are far enough apart that
    the per-tile accept/reject decisions commute, so the sequential loop
    below realizes the simultaneous update. Returns (state, n_accepted,
    n_active_tiles).
    """
    grid.check_compatible(table.r_max)
    if table.xy_red is None or table.xy_blue is None:
        raise ValueError("table lacks point coordinates needed for tiling")
    w_eff, logw_eff = table.effective(kind)
    period = grid.tile * grid.n_classes
    if grid.offset is not None:
        ox, oy = grid.offset
    else:
        ox, oy = rng.uniform(0.0, period, size=2)
    cls = rng.integers(0, grid.n_classes, size=2)

    def tile_of(xy):
        t = np.floor((xy - np.array([ox, oy])) / grid.tile).astype(np.int64)
        return t

    tr = tile_of(table.xy_red)
    tb = tile_of(table.xy_blue)
    in_class_r = (tr % grid.n_classes == cls).all(axis=1)
    in_class_b = (tb % grid.n_classes == cls).all(axis=1)
    keys_r = {}
    for i in np.flatnonzero(in_class_r):
        keys_r.setdefault((tr[i, 0], tr[i, 1]), []).append(int(i))
    keys_b = {}
    for j in np.flatnonzero(in_class_b):
        keys_b.setdefault((tb[j, 0], tb[j, 1]), []).append(int(j))
    active = sorted(set(keys_r) & set(keys_b))
    if max_tiles is not None and len(active) > max_tiles:
        pick = rng.choice(len(active), size=max_tiles, replace=False)
        active = [active[int(i)] for i in sorted(pick)]

    n_accepted = 0
    for key in active:
        rows = np.array(keys_r[key], dtype=np.int64)
        colsb = np.array(keys_b[key], dtype=np.int64)
        in_rows = np.zeros(table.shape[0], dtype=bool)
        in_rows[rows] = True
        in_cols = np.zeros(table.shape[1], dtype=bool)
        in_cols[colsb] = True
        M = selection_mass_matrix(state.pr, state.pb, w_eff, kind, table)
        Msub = M[np.ix_(rows, colsb)]
        Z = Msub.sum()
        if Z <= 0:
            continue
        flat = rng.choice(Msub.size, p=(Msub / Z).ravel())
        ai, bi = divmod(int(flat), Msub.shape[1])
        a, b = int(rows[ai]), int(colsb[bi])
        mf = M[a, b]

        jp = int(state.pr[a])
        ip = int(state.pb[b])
        if jp == b:
            mkind, ratio = "deletion", 1.0 / w_eff[a, b]
        elif jp < 0 and ip < 0:
            mkind, ratio = "addition", w_eff[a, b]
        elif jp >= 0 and ip < 0:
            mkind, ratio = "switch_i", w_eff[a, b] / w_eff[a, jp]
        elif jp < 0 and ip >= 0:
            mkind, ratio = "switch_j", w_eff[a, b] / w_eff[ip, b]
        else:
            mkind = "double_switch"
            ratio = (w_eff[a, b] * w_eff[ip, jp]) / (w_eff[a, jp] * w_eff[ip, b])
            if ip >= 0 and jp >= 0 and in_rows[ip] and in_cols[jp]:
                mf += M[ip, jp]
        if not ratio > 0:
            continue
        pr2 = state.pr.copy()
        pb2 = state.pb.copy()
        if mkind == "addition":
            pr2[a] = b
            pb2[b] = a
        elif mkind == "deletion":
            pr2[a] = -1
            pb2[b] = -1
        elif mkind == "switch_i":
            pr2[a] = b
            pb2[b] = a
            pb2[jp] = -1
        elif mkind == "switch_j":
            pr2[a] = b
            pb2[b] = a
            pr2[ip] = -1
        else:
            pr2[a] = b
            pb2[b] = a
            pr2[ip] = jp
            pb2[jp] = ip
        M2 = selection_mass_matrix(pr2, pb2, w_eff, kind, table)
        M2sub = M2[np.ix_(rows, colsb)]
        Z2 = M2sub.sum()
        mr = 0.0
        for x, y in _reverse_selections(mkind, a, b, ip, jp):
            if in_rows[x] and in_cols[y]:
                mr += M2[x, y]
        alpha = 0.0
        if Z2 > 0 and mf > 0:
            alpha = ratio * (mr / Z2) * (Z / mf)
        if rng.random() < alpha:
            state.pr = pr2
            state.pb = pb2
            n_accepted += 1
    state.logpi = state._recompute_logpi()
    return state, n_accepted, len(active)
