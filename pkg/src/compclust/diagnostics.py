"""Convergence diagnostics and posterior summaries.

Univariate diagnostics (IAT/ESS) are reported per scalar but never relied on
alone; the multivariate potential scale reduction factor and the matrix of
co-membership probabilities give the robust picture.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "iat_ess",
    "brooks_gelman_psrf",
    "comembership_matrix",
    "proximity_D",
    "association_measure",
    "AssociationResult",
    "hpd_interval",
    "cluster_size_posterior",
    "TraceSeries",
    "summary_matrix",
    "DiagnosticsReport",
]


def iat_ess(series) -> tuple[float, float]:
    """Integrated autocorrelation time and effective sample size.

    Uses the initial-positive-sequence truncation of the autocorrelation sum.
    A constant series has no defined IAT; it is flagged with a warning and
    ESS = length.
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    if n < 100:
        raise ValueError("series too short (need >= 100)")
    x = x - x.mean()
    var = float(np.dot(x, x) / n)
    if var <= 0:
        warnings.warn("constant series: IAT undefined, reporting ESS = length")
        return float("nan"), float(n)
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n].real / n
    acf = acov / acov[0]
    # Geyer: sum consecutive pairs while they stay positive
    total = 0.0
    m = 0
    while 2 * m + 1 < n:
        gamma = acf[2 * m] + acf[2 * m + 1]
        if gamma <= 0:
            break
        total += gamma
        m += 1
    iat = max(2.0 * total - 1.0, 1e-12)
    return float(iat), float(n / iat)


def brooks_gelman_psrf(chains) -> float:
    """Multivariate potential scale reduction factor (largest-eigenvalue form).

    chains: sequence of (n, d) arrays (or 1-d arrays), equal lengths. Returns
    the PSRF on the scale of the statistic (square root of the variance
    ratio); 1-d input reduces to the univariate formula.
    """
    mats = [np.atleast_2d(np.asarray(c, dtype=float).T).T for c in chains]
    mats = [c.reshape(c.shape[0], -1) for c in mats]
    m = len(mats)
    if m < 2:
        raise ValueError("need at least two chains")
    n = mats[0].shape[0]
    d = mats[0].shape[1]
    if any(c.shape != (n, d) for c in mats):
        raise ValueError("chains must share (length, dim)")
    if n < 100:
        raise ValueError("chains too short (need >= 100)")
    means = np.stack([c.mean(axis=0) for c in mats])
    W = np.zeros((d, d))
    for c in mats:
        dev = c - c.mean(axis=0)
        W += dev.T @ dev / (n - 1)
    W /= m
    grand = means.mean(axis=0)
    B_over_n = (means - grand).T @ (means - grand) / (m - 1)
    try:
        solved = np.linalg.solve(W, B_over_n)
    except np.linalg.LinAlgError:
        warnings.warn("singular within-chain covariance; ridge-regularizing")
        ridge = 1e-10 * max(np.trace(W) / d, 1e-300)
        solved = np.linalg.solve(W + ridge * np.eye(d), B_over_n)
    lam_max = float(np.max(np.linalg.eigvals(solved).real))
    v = (n - 1) / n + (m + 1) / m * lam_max
    return float(math.sqrt(max(v, 0.0)))


def comembership_matrix(label_samples) -> np.ndarray:
    """Fraction of samples in which two points share a cluster (diagonal 0)."""
    labels = np.atleast_2d(np.asarray(label_samples))
    ns, n = labels.shape
    if ns < 1:
        raise ValueError("need at least one sample")
    p = np.zeros((n, n))
    for row in labels:
        p += row[:, None] == row[None, :]
    p /= ns
    np.fill_diagonal(p, 0.0)
    return p


def proximity_D(p1: np.ndarray, p2: np.ndarray) -> float:
    """Sup-distance between two co-membership (or link-probability) matrices."""
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    if p1.shape != p2.shape:
        raise ValueError("matrices must have matching shapes")
    return float(np.max(np.abs(p1 - p2)))


@dataclass
class AssociationResult:
    """Pairwise association between placename types, raw and relative to the
    numerosity-matched null."""

    raw: np.ndarray
    null: np.ndarray
    relative: np.ndarray
    pr_single: np.ndarray
    defined: np.ndarray


def _occurrence_probs(labels_row, marks, k):
    """Per-sample cluster occurrence and co-occurrence frequencies."""
    groups: dict[int, set[int]] = {}
    for i, lab in enumerate(labels_row):
        groups.setdefault(int(lab), set()).add(int(marks[i]))
    N = len(groups)
    occ = np.zeros(k)
    cooc = np.zeros((k, k))
    for mk in groups.values():
        mlist = sorted(mk)
        for a in mlist:
            occ[a - 1] += 1
            for b in mlist:
                if b > a:
                    cooc[a - 1, b - 1] += 1
                    cooc[b - 1, a - 1] += 1
    return occ / N, cooc / N, [len(mk) for mk in groups.values()]


def _null_marks(size: int, probs: np.ndarray, rng: np.random.Generator,
                max_tries: int = 10_000) -> np.ndarray:
    """size marks iid proportional-to-numerosity, rejected until distinct."""
    for _ in range(max_tries):
        draw = rng.choice(probs.size, size=size, p=probs) + 1
        if len(set(draw.tolist())) == size:
            return draw
    raise RuntimeError("null mark sampler failed to produce distinct marks")


def association_measure(label_samples, marks, rng: np.random.Generator,
                        n_null: int | None = None) -> AssociationResult:
    """Pr[both names in a uniformly chosen cluster] / (Pr[one] Pr[other]).

    The relative matrix divides by the same measure under the null that
    refills every cluster with marks drawn proportional to their numerosity
    (conditioned distinct, by rejection), estimated by Monte Carlo. Entries
    whose types never occur are flagged undefined (NaN).
    """
    labels = np.atleast_2d(np.asarray(label_samples))
    marks = np.asarray(marks, dtype=np.int64)
    k = int(marks.max())
    ns = labels.shape[0]
    n_null = n_null or ns
    numerosity = np.bincount(marks, minlength=k + 1)[1:].astype(float)
    probs = numerosity / numerosity.sum()

    occ = np.zeros(k)
    cooc = np.zeros((k, k))
    sizes_pool = []
    for row in labels:
        o, c, sizes = _occurrence_probs(row, marks, k)
        occ += o
        cooc += c
        sizes_pool.append(sizes)
    occ /= ns
    cooc /= ns
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = cooc / (occ[:, None] * occ[None, :])
    defined = (occ[:, None] > 0) & (occ[None, :] > 0)
    raw = np.where(defined, raw, np.nan)

    occ_n = np.zeros(k)
    cooc_n = np.zeros((k, k))
    for it in range(n_null):
        sizes = sizes_pool[it % len(sizes_pool)]
        N = len(sizes)
        o = np.zeros(k)
        c = np.zeros((k, k))
        for s in sizes:
            mks = _null_marks(s, probs, rng) if s > 1 else rng.choice(k, size=1, p=probs) + 1
            mlist = sorted(int(x) for x in mks)
            for a in mlist:
                o[a - 1] += 1
            for ai, a in enumerate(mlist):
                for b in mlist[ai + 1:]:
                    c[a - 1, b - 1] += 1
                    c[b - 1, a - 1] += 1
        occ_n += o / N
        cooc_n += c / N
    occ_n /= n_null
    cooc_n /= n_null
    with np.errstate(divide="ignore", invalid="ignore"):
        null = cooc_n / (occ_n[:, None] * occ_n[None, :])
        relative = raw / null
    null = np.where(defined, null, np.nan)
    relative = np.where(defined & (null > 0), relative, np.nan)
    return AssociationResult(raw=raw, null=null, relative=relative,
                             pr_single=occ, defined=defined)


def hpd_interval(samples, mass: float = 0.95) -> tuple[float, float]:
    """Shortest interval containing the given posterior mass (sorted-sample form)."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    m = int(math.ceil(mass * n))
    if m >= n:
        return float(x[0]), float(x[-1])
    widths = x[m:] - x[: n - m]
    i = int(np.argmin(widths))
    return float(x[i]), float(x[i + m])


def cluster_size_posterior(store) -> dict:
    """Means, quantiles and 95% HPD intervals of (Y_1..Y_k), p, sigma, lambda."""
    if store.n_samples < 100:
        raise ValueError("need at least 100 samples")
    out: dict = {}

    def summarize(name, arr):
        arr = np.asarray(arr, dtype=float)
        lo, hi = hpd_interval(arr)
        out[name] = {
            "mean": float(arr.mean()),
            "q025": float(np.quantile(arr, 0.025)),
            "median": float(np.quantile(arr, 0.5)),
            "q975": float(np.quantile(arr, 0.975)),
            "hpd_lo": lo,
            "hpd_hi": hi,
        }

    summarize("sigma", store.sigma)
    summarize("lambda", store.lam)
    for l in range(store.k):
        summarize(f"Y{l + 1}", store.Y[:, l])
        summarize(f"p{l + 1}", store.p[:, l])
    summarize("n_clusters", store.n_clusters)
    return out


@dataclass
class TraceSeries:
    """Per-recorded-sweep scalar and vector traces of one chain."""

    sigma: np.ndarray
    lam: np.ndarray
    p: np.ndarray
    n_clusters: np.ndarray
    Y: np.ndarray
    edge_diff: np.ndarray

    @classmethod
    def from_store(cls, store, ref_labels=None) -> "TraceSeries":
        labels = store.labels
        ns, n = labels.shape
        if ref_labels is None:
            ref_edges = set()
        else:
            ref_edges = _edge_set(np.asarray(ref_labels))
        diffs = np.empty(ns)
        for s in range(ns):
            diffs[s] = len(_edge_set(labels[s]) ^ ref_edges)
        return cls(sigma=store.sigma, lam=store.lam, p=store.p,
                   n_clusters=store.n_clusters, Y=store.Y, edge_diff=diffs)


def _edge_set(labels: np.ndarray) -> set:
    groups: dict[int, list[int]] = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(i)
    return {tuple(sorted(m)) for m in groups.values() if len(m) >= 2}


def summary_matrix(store, dim: int = 10) -> np.ndarray:
    """Default multivariate chain summary: (sigma, lambda, N, Y_1..4, p_1..3),
    truncated to the requested dimension."""
    cols = [store.sigma, store.lam, store.n_clusters.astype(float)]
    for l in range(min(4, store.k)):
        cols.append(store.Y[:, l].astype(float))
    for l in range(min(3, store.k)):
        cols.append(store.p[:, l])
    return np.column_stack(cols)[:, :dim]


@dataclass
class DiagnosticsReport:
    """IAT/ESS per scalar, multivariate PSRF across chains, proximity D."""

    iat: dict
    ess: dict
    psrf: float | None
    proximity: float | None

    @classmethod
    def from_stores(cls, stores, comembership_pairs: bool = True) -> "DiagnosticsReport":
        iat: dict = {}
        ess: dict = {}
        first = stores[0]
        for name, arr in (("sigma", first.sigma), ("lambda", first.lam),
                          ("n_clusters", first.n_clusters)):
            try:
                i, e = iat_ess(arr)
            except ValueError:
                i, e = float("nan"), float("nan")
            iat[name] = i
            ess[name] = e
        psrf = None
        prox = None
        if len(stores) >= 2:
            nmin = min(s.n_samples for s in stores)
            try:
                psrf = brooks_gelman_psrf([summary_matrix(s)[-nmin:] for s in stores])
            except ValueError:
                psrf = None
            if comembership_pairs:
                p1 = comembership_matrix(stores[0].labels)
                p2 = comembership_matrix(stores[1].labels)
                prox = proximity_D(p1, p2)
        return cls(iat=iat, ess=ess, psrf=psrf, proximity=prox)

    def to_dict(self) -> dict:
        return {
            "iat": self.iat,
            "ess": self.ess,
            "psrf": self.psrf,
            "proximity_D": self.proximity,
        }
