"""The probabilistic model: cluster likelihood, hyperedge weights, conditionals.

A partition rho of the marked points is scored cluster by cluster. Each
cluster of size s contributes

    g(centroid) * lam * p_s / (c_s * sigma^(2(s-1))) * exp(-pi * scatter / (2 sigma^2))

with c_s = C(k,s) * s * 2^(s-1), so the posterior of rho factorizes over
clusters and merging a set of singletons into one cluster multiplies the
posterior by a computable hyperedge weight. All densities are handled in log
space; weights are exponentiated only inside proposal tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .patterns import ClusterSummary, Matching, PointPattern, ObservationWindow, summarize_cluster

__all__ = [
    "Hyperparams",
    "ModelParams",
    "CenterDensity",
    "size_constant",
    "cluster_log_likelihood",
    "hyperedge_log_weight",
    "log_posterior_partition",
    "sigma_log_conditional",
    "gibbs_update_p",
    "gibbs_update_lambda",
    "mh_update_sigma",
]


def size_constant(k: int, s: int) -> float:
    """c_s = C(k,s) * s * 2^(s-1), the size-s normalizer of the cluster density."""
    return math.comb(k, s) * s * 2.0 ** (s - 1)


@dataclass(frozen=True)
class Hyperparams:
    """Fixed hyperparameters: sigma upper bound, Gamma(shape, scale) prior on
    the expected cluster count, Dirichlet concentrations for the size
    distribution."""

    sigma_max: float = 50.0
    lambda_shape: float = 300.0
    lambda_scale: float = 1.0
    alpha: tuple = ()

    def __post_init__(self):
        if self.sigma_max <= 0 or self.lambda_shape <= 0 or self.lambda_scale <= 0:
            raise ValueError("hyperparameters must be strictly positive")
        if self.alpha and min(self.alpha) <= 0:
            raise ValueError("Dirichlet concentrations must be strictly positive")

    @classmethod
    def default(cls, k: int, **overrides) -> "Hyperparams":
        """Defaults: sigma_max=50 km, Gamma(300, 1), alpha=(1/k, ..., 1/k)."""
        kw = dict(alpha=tuple([1.0 / k] * k))
        kw.update(overrides)
        return cls(**kw)

    def alpha_for(self, k: int) -> np.ndarray:
        if self.alpha:
            a = np.asarray(self.alpha, dtype=float)
            if a.size != k:
                raise ValueError("alpha length must equal k")
            return a
        return np.full(k, 1.0 / k)


@dataclass
class ModelParams:
    """Continuous unknowns: dispersion sigma (km), size distribution p on
    {1..k}, expected cluster count lam."""

    sigma: float
    p_sizes: np.ndarray
    lam: float

    def __post_init__(self):
        self.p_sizes = np.asarray(self.p_sizes, dtype=float)
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if self.lam <= 0:
            raise ValueError("lam must be > 0")
        if np.any(self.p_sizes < 0) or abs(self.p_sizes.sum() - 1.0) > 1e-8:
            raise ValueError("p_sizes must be a probability vector")

    @property
    def k(self) -> int:
        return self.p_sizes.size

    def copy(self) -> "ModelParams":
        return ModelParams(self.sigma, self.p_sizes.copy(), self.lam)


class CenterDensity:
    """Density of cluster centers on a regular grid with bilinear interpolation.

    Evaluation clamps at zero and returns zero outside the grid hull. The
    values are per km^2 and are expected to integrate to about one over the
    observation window (within quadrature tolerance).
    """

    def __init__(self, values, x0, y0, dx, dy, normalized=True):
        self.values = np.asarray(values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("values must be a 2-d grid (ny, nx)")
        self.x0 = float(x0)
        self.y0 = float(y0)
        self.dx = float(dx)
        self.dy = float(dy)
        self.normalized = bool(normalized)

    @classmethod
    def uniform(cls, window: ObservationWindow) -> "CenterDensity":
        """Constant density 1/area over the window's bounding box."""
        xmin, xmax, ymin, ymax = window.bounds
        v = 1.0 / window.area
        values = np.full((2, 2), v)
        return cls(values, xmin, ymin, xmax - xmin, ymax - ymin)

    @classmethod
    def from_callable(cls, fn, window: ObservationWindow, cell=1.0) -> "CenterDensity":
        """Sample an arbitrary density onto a grid covering the window bounds."""
        xmin, xmax, ymin, ymax = window.bounds
        nx = max(2, int(np.ceil((xmax - xmin) / cell)) + 1)
        ny = max(2, int(np.ceil((ymax - ymin) / cell)) + 1)
        xs = np.linspace(xmin, xmax, nx)
        ys = np.linspace(ymin, ymax, ny)
        gx, gy = np.meshgrid(xs, ys)
        values = fn(np.column_stack([gx.ravel(), gy.ravel()])).reshape(ny, nx)
        return cls(values, xmin, ymin, xs[1] - xs[0], ys[1] - ys[0])

    def grid_arrays(self):
        """Raw arrays for compiled evaluators: (values, x0, y0, dx, dy)."""
        return self.values, self.x0, self.y0, self.dx, self.dy

    def __call__(self, xy) -> np.ndarray:
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        v = self.values
        ny, nx = v.shape
        fx = (xy[:, 0] - self.x0) / self.dx
        fy = (xy[:, 1] - self.y0) / self.dy
        inside = (fx >= 0) & (fx <= nx - 1) & (fy >= 0) & (fy <= ny - 1)
        fx = np.clip(fx, 0, nx - 1 - 1e-12)
        fy = np.clip(fy, 0, ny - 1 - 1e-12)
        ix = np.minimum(fx.astype(np.int64), nx - 2)
        iy = np.minimum(fy.astype(np.int64), ny - 2)
        tx = fx - ix
        ty = fy - iy
        out = (
            v[iy, ix] * (1 - tx) * (1 - ty)
            + v[iy, ix + 1] * tx * (1 - ty)
            + v[iy + 1, ix] * (1 - tx) * ty
            + v[iy + 1, ix + 1] * tx * ty
        )
        return np.where(inside, np.maximum(out, 0.0), 0.0)

    def log_at(self, xy) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self(xy))

    def mass_over(self, window: ObservationWindow, cell=None) -> float:
        """Quadrature of the density over the window."""
        xmin, xmax, ymin, ymax = window.bounds
        if cell is None:
            cell = min(self.dx, self.dy, (xmax - xmin) / 64, (ymax - ymin) / 64)
        xs = np.arange(xmin + cell / 2, xmax, cell)
        ys = np.arange(ymin + cell / 2, ymax, cell)
        gx, gy = np.meshgrid(xs, ys)
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        inside = window.contains(pts)
        return float(self(pts)[inside].sum() * cell * cell)


def cluster_log_likelihood(summary: ClusterSummary, sigma: float, k: int, g: CenterDensity) -> float:
    """Log density of one cluster's locations and marks given its size.

    log g(centroid) - log(C(k,s) * s) - (s-1) log(2 sigma^2) - pi*scatter/(2 sigma^2).
    """
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    s = summary.size
    if not 1 <= s <= k:
        raise ValueError("cluster size must lie in 1..k")
    gv = float(g(np.array([summary.centroid]))[0])
    logg = math.log(gv) if gv > 0 else -math.inf
    return (
        logg
        - math.log(math.comb(k, s) * s)
        - (s - 1) * math.log(2.0 * sigma * sigma)
        - math.pi * summary.scatter / (2.0 * sigma * sigma)
    )


def _cluster_log_factor(summary: ClusterSummary, params: ModelParams, g: CenterDensity, k: int) -> float:
    """Log of one cluster's contribution to the conditional posterior of rho.

    Equals log(lam * p_s) plus the cluster log likelihood, since
    c_s * sigma^(2(s-1)) = C(k,s) * s * (2 sigma^2)^(s-1).
    """
    s = summary.size
    ps = params.p_sizes[s - 1]
    if ps <= 0:
        return -math.inf
    return (
        cluster_log_likelihood(summary, params.sigma, k, g)
        + math.log(params.lam)
        + math.log(ps)
    )


def hyperedge_log_weight(points, pattern: PointPattern, params: ModelParams, g: CenterDensity) -> float:
    """Log posterior gain from merging the given singleton points into one cluster.

    exp of this value equals pi_hat(rho + e) / pi_hat(rho) whenever the points
    of e are singletons in rho.
    """
    idx = [int(i) for i in points]
    k = pattern.k
    if not 2 <= len(idx) <= k:
        raise ValueError("edge must contain 2..k points")
    marks = pattern.marks[idx]
    if len(set(marks.tolist())) != len(idx):
        raise ValueError("edge holds two points of the same color")
    merged = summarize_cluster(pattern.xy, idx)
    total = _cluster_log_factor(merged, params, g, k)
    for i in idx:
        total -= _cluster_log_factor(summarize_cluster(pattern.xy, [i]), params, g, k)
    return total


def log_posterior_partition(pattern: PointPattern, rho: Matching, params: ModelParams, g: CenterDensity) -> float:
    """Unnormalized log conditional posterior of the partition rho."""
    total = 0.0
    for cluster in rho.clusters():
        total += _cluster_log_factor(summarize_cluster(pattern.xy, cluster), params, g, pattern.k)
    return total


def sigma_log_conditional(sigma, pattern: PointPattern, rho: Matching, sigma_max: float = 50.0):
    """Unnormalized log conditional of sigma given the partition.

    -2(n - N(rho)) log sigma - pi * sum_j scatter_j / (2 sigma^2) on
    (0, sigma_max), -inf outside. Accepts scalar or array sigma.
    """
    n_minus_N = pattern.n - rho.n_clusters
    total_scatter = 0.0
    for members in rho._edges.values():
        total_scatter += summarize_cluster(pattern.xy, members).scatter
    sig = np.asarray(sigma, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -2.0 * n_minus_N * np.log(sig) - math.pi * total_scatter / (2.0 * sig**2)
    out = np.where((sig > 0) & (sig < sigma_max), out, -np.inf)
    return float(out) if np.isscalar(sigma) else out


def gibbs_update_p(rho: Matching, alpha, rng: np.random.Generator) -> np.ndarray:
    """Exact Dirichlet draw of the size distribution: Dir(alpha_l + N_l(rho))."""
    alpha = np.asarray(alpha, dtype=float)
    k = alpha.size
    from .patterns import cluster_size_counts

    N, _ = cluster_size_counts(rho, k)
    return rng.dirichlet(alpha + N)


def gibbs_update_lambda(rho: Matching, lambda_shape: float, lambda_scale: float,
                        rng: np.random.Generator) -> float:
    """Exact Gamma draw of the cluster-count rate.

    Shape lambda_shape + N(rho), scale lambda_scale / (lambda_scale + 1);
    mean = shape * scale.
    """
    shape = lambda_shape + rho.n_clusters
    scale = lambda_scale / (lambda_scale + 1.0)
    return float(rng.gamma(shape, scale))


def mh_update_sigma(pattern: PointPattern, rho: Matching, sigma: float, sigma_max: float,
                    rng: np.random.Generator, step_scale: float = 0.1, n_inner: int = 5) -> float:
    """A few random-walk MH steps on log sigma targeting its conditional."""
    n_minus_N = pattern.n - rho.n_clusters
    total_scatter = 0.0
    for members in rho._edges.values():
        total_scatter += summarize_cluster(pattern.xy, members).scatter
    return _mh_sigma_raw(n_minus_N, total_scatter, sigma, sigma_max, rng, step_scale, n_inner)


def _mh_sigma_raw(n_minus_N: int, total_scatter: float, sigma: float, sigma_max: float,
                  rng: np.random.Generator, step_scale: float = 0.1, n_inner: int = 5) -> float:
    def logtarget(s):
        if not 0 < s < sigma_max:
            return -math.inf
        return -2.0 * n_minus_N * math.log(s) - math.pi * total_scatter / (2.0 * s * s)

    cur = float(sigma)
    cur_lt = logtarget(cur)
    for _ in range(n_inner):
        prop = cur * math.exp(step_scale * rng.standard_normal())
        prop_lt = logtarget(prop)
        # log-scale random walk: Jacobian contributes log(prop/cur)
        if math.log(rng.random()) < prop_lt - cur_lt + math.log(prop / cur):
            cur, cur_lt = prop, prop_lt
    return cur
