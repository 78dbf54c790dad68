"""Forward simulators: the generative clustering model and no-interaction nulls."""

from __future__ import annotations

import math

import numpy as np

from .model import CenterDensity, ModelParams
from .patterns import Matching, ObservationWindow, PointPattern

__all__ = ["simulate_model", "simulate_csri", "sample_from_density", "poisson_from_field"]


def sample_from_density(g: CenterDensity, window: ObservationWindow, size: int,
                        rng: np.random.Generator) -> np.ndarray:
    """Rejection-sample points from a grid density over the window bounds."""
    xmin, xmax, ymin, ymax = window.bounds
    gmax = float(g.values.max())
    if gmax <= 0:
        raise ValueError("density is identically zero")
    out = np.empty((size, 2))
    got = 0
    while got < size:
        m = max(64, int(1.5 * (size - got)))
        cand = np.column_stack([
            rng.uniform(xmin, xmax, m),
            rng.uniform(ymin, ymax, m),
        ])
        keep = rng.random(m) * gmax < g(cand)
        kept = cand[keep]
        take = min(len(kept), size - got)
        out[got:got + take] = kept[:take]
        got += take
    return out


def simulate_model(params: ModelParams, k: int, window: ObservationWindow,
                   rng: np.random.Generator, g: CenterDensity | None = None,
                   crop: bool = False):
    """Draw one pattern from the generative model; returns (pattern, truth).

    Cluster count ~ Poisson(lam); sizes iid from p; centers from g;
    displacements are iid bivariate normal with variance sigma^2/pi, centered
    to mean zero within the cluster, so sigma is the expected distance of two
    points in a common cluster. Marks of a size-s cluster are a uniform size-s
    subset of the colors. Points falling outside the window are kept unless
    crop is set (the model does not condition on the window).
    """
    if g is None:
        g = CenterDensity.uniform(window)
    n_clusters = rng.poisson(params.lam)
    sizes = rng.choice(np.arange(1, k + 1), size=n_clusters, p=params.p_sizes)
    centers = sample_from_density(g, window, n_clusters, rng)
    eta = params.sigma / math.sqrt(math.pi)
    xs, marks, edges = [], [], []
    idx = 0
    for s, z in zip(sizes, centers):
        w = rng.normal(0.0, eta, size=(s, 2))
        y = w - w.mean(axis=0)
        pts = z + y
        mk = rng.choice(k, size=s, replace=False) + 1
        xs.append(pts)
        marks.extend(int(x) for x in mk)
        if s >= 2:
            edges.append(tuple(range(idx, idx + s)))
        idx += s
    xy = np.vstack(xs) if xs else np.zeros((0, 2))
    marks = np.asarray(marks, dtype=np.int64)
    if crop and len(xy):
        keep = window.contains(xy)
        remap = -np.ones(len(xy), dtype=np.int64)
        remap[keep] = np.arange(int(keep.sum()))
        xy = xy[keep]
        marks = marks[keep]
        edges = [
            tuple(int(remap[i]) for i in e if keep[i])
            for e in edges
        ]
        edges = [e for e in edges if len(e) >= 2]
    pattern = PointPattern(xy, marks, k, window)
    truth = Matching.from_edges(pattern, edges)
    return pattern, truth


def poisson_from_field(field, window: ObservationWindow, rng: np.random.Generator) -> np.ndarray:
    """Inhomogeneous Poisson points by thinning a homogeneous dominating process."""
    xmin, xmax, ymin, ymax = window.bounds
    lam_max = float(np.max(field.values))
    if lam_max <= 0:
        return np.zeros((0, 2))
    area = (xmax - xmin) * (ymax - ymin)
    n_dom = rng.poisson(lam_max * area)
    cand = np.column_stack([
        rng.uniform(xmin, xmax, n_dom),
        rng.uniform(ymin, ymax, n_dom),
    ])
    if n_dom == 0:
        return np.zeros((0, 2))
    vals = field(cand)
    keep = (rng.random(n_dom) * lam_max < vals) & window.contains(cand)
    return cand[keep]


def simulate_csri(window: ObservationWindow, rng: np.random.Generator, *,
                  n_per_type=None, k: int | None = None,
                  fields=None) -> PointPattern:
    """No-interaction null: independent components per type.

    Either fixed counts of uniform points per type (CSRI proper) or
    independent inhomogeneous Poisson components from per-type intensity
    fields.
    """
    if (n_per_type is None) == (fields is None):
        raise ValueError("give exactly one of n_per_type or fields")
    xs, marks = [], []
    if n_per_type is not None:
        counts = list(n_per_type)
        k = k or len(counts)
        xmin, xmax, ymin, ymax = window.bounds
        for t, n_t in enumerate(counts, start=1):
            pts = np.column_stack([
                rng.uniform(xmin, xmax, n_t),
                rng.uniform(ymin, ymax, n_t),
            ])
            if not window.is_rectangle:
                # uniform on a polygon window: rejection against membership
                got = pts[window.contains(pts)]
                while len(got) < n_t:
                    extra = np.column_stack([
                        rng.uniform(xmin, xmax, n_t),
                        rng.uniform(ymin, ymax, n_t),
                    ])
                    got = np.vstack([got, extra[window.contains(extra)]])
                pts = got[:n_t]
            xs.append(pts)
            marks.extend([t] * n_t)
    else:
        k = k or len(fields)
        for t, field in enumerate(fields, start=1):
            pts = poisson_from_field(field, window, rng)
            xs.append(pts)
            marks.extend([t] * len(pts))
    xy = np.vstack([x for x in xs if len(x)]) if any(len(x) for x in xs) else np.zeros((0, 2))
    return PointPattern(xy, np.asarray(marks, dtype=np.int64), k, window)
