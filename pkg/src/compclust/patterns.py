"""Marked planar point patterns and matchings in complete k-partite hypergraphs.

Points carry a color mark in {1..k} and live in a planar observation window
(coordinates in km). A matching groups point indices into clusters that hold
at most one point of each color. Matchings keep both the hyperedge set and an
inverse point->cluster map, so classifying a two-color move is O(1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "MarkedPoint",
    "ObservationWindow",
    "PointPattern",
    "Matching",
    "ClusterSummary",
    "MoveKind",
    "move_classify",
    "move_apply",
    "partition_stats",
    "cluster_size_counts",
    "ClusterStatsCache",
]


@dataclass(frozen=True)
class MarkedPoint:
    """A planar point (km) with a color mark in {1..k}."""

    x: float
    y: float
    mark: int


class ObservationWindow:
    """Planar observation region, rectangle fast path or polygon, with a buffer zone.

    The buffer (km) enlarges the region so that points slightly outside the
    nominal boundary still count as observed. Rectangle buffering keeps square
    corners; polygon buffering uses the usual rounded offset.
    """

    def __init__(self, *, bounds=None, polygon=None, buffer=0.0):
        if buffer < 0:
            raise ValueError("buffer must be >= 0")
        self.buffer = float(buffer)
        if (bounds is None) == (polygon is None):
            raise ValueError("give exactly one of bounds or polygon")
        if bounds is not None:
            xmin, xmax, ymin, ymax = map(float, bounds)
            xmin -= buffer
            xmax += buffer
            ymin -= buffer
            ymax += buffer
            if xmax <= xmin or ymax <= ymin:
                raise ValueError("window must have positive area")
            self._rect = (xmin, xmax, ymin, ymax)
            self._poly = None
        else:
            import shapely

            poly = shapely.Polygon(polygon)
            if buffer > 0:
                poly = poly.buffer(buffer)
            if poly.area <= 0:
                raise ValueError("window must have positive area")
            self._poly = poly
            self._rect = None

    @classmethod
    def rectangle(cls, xmin, xmax, ymin, ymax, buffer=0.0):
        return cls(bounds=(xmin, xmax, ymin, ymax), buffer=buffer)

    @classmethod
    def unit_square(cls, side=1.0):
        return cls(bounds=(0.0, side, 0.0, side))

    @classmethod
    def from_polygon(cls, coords, buffer=0.0):
        return cls(polygon=coords, buffer=buffer)

    @property
    def is_rectangle(self) -> bool:
        return self._rect is not None

    @property
    def area(self) -> float:
        if self._rect is not None:
            xmin, xmax, ymin, ymax = self._rect
            return (xmax - xmin) * (ymax - ymin)
        return self._poly.area

    @property
    def bounds(self):
        """(xmin, xmax, ymin, ymax) of the (buffered) region."""
        if self._rect is not None:
            return self._rect
        b = self._poly.bounds
        return (b[0], b[2], b[1], b[3])

    def contains(self, xy) -> np.ndarray:
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        if self._rect is not None:
            xmin, xmax, ymin, ymax = self._rect
            return (
                (xy[:, 0] >= xmin)
                & (xy[:, 0] <= xmax)
                & (xy[:, 1] >= ymin)
                & (xy[:, 1] <= ymax)
            )
        import shapely

        return shapely.contains_xy(self._poly, xy[:, 0], xy[:, 1])

    def distance_to_boundary(self, xy) -> np.ndarray:
        """Distance from interior points to the window boundary (0 outside)."""
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        if self._rect is not None:
            xmin, xmax, ymin, ymax = self._rect
            d = np.minimum.reduce(
                [xy[:, 0] - xmin, xmax - xy[:, 0], xy[:, 1] - ymin, ymax - xy[:, 1]]
            )
            return np.maximum(d, 0.0)
        import shapely

        inside = self.contains(xy)
        pts = shapely.points(xy[:, 0], xy[:, 1])
        d = shapely.distance(pts, self._poly.boundary)
        return np.where(inside, d, 0.0)

    def __repr__(self):
        if self._rect is not None:
            return f"ObservationWindow(rect={self._rect})"
        return f"ObservationWindow(polygon, area={self.area:.3f})"


class PointPattern:
    """An ordered list of marked points plus the window they were observed in.

    Point indices are the stable identities used by matchings; coincident
    points are legal.
    """

    def __init__(self, xy, marks, k: int, window: ObservationWindow):
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        marks = np.asarray(marks, dtype=np.int64).reshape(-1)
        if xy.shape[0] != marks.shape[0]:
            raise ValueError("xy and marks length mismatch")
        if not np.all(np.isfinite(xy)):
            raise ValueError("coordinates must be finite")
        if marks.size and (marks.min() < 1 or marks.max() > k):
            raise ValueError(f"marks must lie in 1..{k}")
        self.xy = xy
        self.marks = marks
        self.k = int(k)
        self.window = window

    @classmethod
    def from_points(cls, points: Sequence[MarkedPoint], k: int, window: ObservationWindow):
        xy = [(p.x, p.y) for p in points]
        marks = [p.mark for p in points]
        return cls(xy, marks, k, window)

    @property
    def n(self) -> int:
        return self.xy.shape[0]

    @property
    def points(self) -> list[MarkedPoint]:
        return [MarkedPoint(x, y, int(m)) for (x, y), m in zip(self.xy, self.marks)]

    def indices_of_mark(self, mark: int) -> np.ndarray:
        return np.flatnonzero(self.marks == mark)

    def mark_counts(self) -> np.ndarray:
        return np.bincount(self.marks, minlength=self.k + 1)[1:]

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"PointPattern(n={self.n}, k={self.k})"


class MoveKind(Enum):
    """The five cases of the two-color edge move rho∘(i,j)."""

    ADDITION = "addition"
    DELETION = "deletion"
    SWITCH_I = "switch_i"  # i already matched; its partner j' is released
    SWITCH_J = "switch_j"  # j already matched; its partner i' is released
    DOUBLE_SWITCH = "double_switch"


class Matching:
    """A partial matching: disjoint hyperedges with pairwise-distinct marks.

    Each edge is a set of 2..k point indices. Singletons are implicit: a point
    not covered by any edge forms its own cluster. N(rho) denotes the total
    number of clusters, edges plus singletons.
    """

    __slots__ = ("marks", "k", "_cluster_of", "_edges", "_next_id")

    def __init__(self, marks, k: int):
        self.marks = np.asarray(marks, dtype=np.int64)
        self.k = int(k)
        self._cluster_of = np.full(self.marks.shape[0], -1, dtype=np.int64)
        self._edges: dict[int, set[int]] = {}
        self._next_id = 0

    # -- construction -----------------------------------------------------
    @classmethod
    def empty(cls, pattern: PointPattern) -> "Matching":
        return cls(pattern.marks, pattern.k)

    @classmethod
    def from_edges(cls, pattern_or_marks, edges: Iterable[Iterable[int]], k: int | None = None):
        if isinstance(pattern_or_marks, PointPattern):
            m = cls(pattern_or_marks.marks, pattern_or_marks.k)
        else:
            if k is None:
                raise ValueError("k required when passing raw marks")
            m = cls(pattern_or_marks, k)
        for e in edges:
            m.add_edge(e)
        return m

    def copy(self) -> "Matching":
        new = Matching.__new__(Matching)
        new.marks = self.marks
        new.k = self.k
        new._cluster_of = self._cluster_of.copy()
        new._edges = {eid: set(members) for eid, members in self._edges.items()}
        new._next_id = self._next_id
        return new

    # -- queries ------------------------------------------------------------
    @property
    def n(self) -> int:
        return self.marks.shape[0]

    @property
    def edges(self) -> set[frozenset[int]]:
        return {frozenset(members) for members in self._edges.values()}

    @property
    def n_edges(self) -> int:
        return len(self._edges)

    @property
    def n_clusters(self) -> int:
        """N(rho): edges plus singleton points."""
        covered = sum(len(m) for m in self._edges.values())
        return len(self._edges) + (self.n - covered)

    def edge_id_of(self, i: int) -> int | None:
        eid = self._cluster_of[i]
        return None if eid < 0 else int(eid)

    def cluster_points(self, i: int) -> frozenset[int]:
        eid = self._cluster_of[i]
        if eid < 0:
            return frozenset((int(i),))
        return frozenset(self._edges[eid])

    def partner(self, i: int) -> int | None:
        """For pairwise matchings: the point matched with i, else None."""
        eid = self._cluster_of[i]
        if eid < 0:
            return None
        members = self._edges[eid]
        if len(members) != 2:
            raise ValueError("partner() requires a pairwise matching")
        (a, b) = tuple(members)
        return int(b) if a == i else int(a)

    def clusters(self) -> list[frozenset[int]]:
        """All clusters (edges and singletons), sorted by minimal member index."""
        covered = np.zeros(self.n, dtype=bool)
        out = []
        for members in self._edges.values():
            out.append(frozenset(members))
            for i in members:
                covered[i] = True
        out.extend(frozenset((int(i),)) for i in np.flatnonzero(~covered))
        out.sort(key=min)
        return out

    def labels(self) -> np.ndarray:
        """Cluster label per point, label = minimal member index of the cluster."""
        lab = np.arange(self.n, dtype=np.int64)
        for members in self._edges.values():
            m = min(members)
            for i in members:
                lab[i] = m
        return lab

    # -- mutation -----------------------------------------------------------
    def add_edge(self, points: Iterable[int]) -> int:
        members = {int(i) for i in points}
        if not 2 <= len(members) <= self.k:
            raise ValueError("edge must contain 2..k points")
        marks_seen = set()
        for i in members:
            if not 0 <= i < self.n:
                raise IndexError(f"point index {i} out of range")
            if self._cluster_of[i] >= 0:
                raise ValueError(f"point {i} already covered by an edge")
            mk = int(self.marks[i])
            if mk in marks_seen:
                raise ValueError("edge holds two points of the same color")
            marks_seen.add(mk)
        eid = self._next_id
        self._next_id += 1
        self._edges[eid] = members
        for i in members:
            self._cluster_of[i] = eid
        return eid

    def remove_edge(self, eid: int) -> None:
        members = self._edges.pop(eid)
        for i in members:
            self._cluster_of[i] = -1

    def remove_edge_of(self, i: int) -> None:
        eid = self._cluster_of[i]
        if eid < 0:
            raise ValueError(f"point {i} is a singleton")
        self.remove_edge(int(eid))

    # -- validation -----------------------------------------------------------
    def check(self) -> None:
        """Raise AssertionError when any matching invariant is violated."""
        seen = set()
        for eid, members in self._edges.items():
            assert 2 <= len(members) <= self.k
            marks = [int(self.marks[i]) for i in members]
            assert len(set(marks)) == len(marks), "duplicate mark in edge"
            for i in members:
                assert i not in seen, "edges not disjoint"
                seen.add(i)
                assert self._cluster_of[i] == eid
        for i in range(self.n):
            if i not in seen:
                assert self._cluster_of[i] == -1

    def __eq__(self, other):
        return isinstance(other, Matching) and self.edges == other.edges

    def __hash__(self):
        return hash(frozenset(self.edges))

    def __repr__(self):
        es = sorted(tuple(sorted(e)) for e in self.edges)
        return f"Matching(n={self.n}, edges={es})"


def _validate_pair(rho: Matching, i: int, j: int) -> None:
    n = rho.n
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"point index out of range: ({i}, {j})")
    if rho.marks[i] == rho.marks[j]:
        raise ValueError("i and j must have opposite colors")


def move_classify(rho: Matching, i: int, j: int):
    """Classify the move rho∘(i,j) without applying it.

    Returns (MoveKind, i_prime, j_prime) where i_prime is j's current partner
    and j_prime is i's current partner (None when absent). For a Deletion both
    are None since no third point is involved.
    """
    _validate_pair(rho, i, j)
    jp = rho.partner(i)
    ip = rho.partner(j)
    if jp == j:
        return MoveKind.DELETION, None, None
    if jp is None and ip is None:
        return MoveKind.ADDITION, None, None
    if jp is not None and ip is None:
        return MoveKind.SWITCH_I, None, jp
    if jp is None and ip is not None:
        return MoveKind.SWITCH_J, ip, None
    return MoveKind.DOUBLE_SWITCH, ip, jp


def move_apply(rho: Matching, i: int, j: int) -> Matching:
    """Apply the two-color move rho∘(i,j) and return the new matching.

    The input matching is left unmodified.
    """
    kind, ip, jp = move_classify(rho, i, j)
    new = rho.copy()
    if kind is MoveKind.DELETION:
        new.remove_edge_of(i)
    elif kind is MoveKind.ADDITION:
        new.add_edge((i, j))
    elif kind is MoveKind.SWITCH_I:
        new.remove_edge_of(i)
        new.add_edge((i, j))
    elif kind is MoveKind.SWITCH_J:
        new.remove_edge_of(j)
        new.add_edge((i, j))
    else:
        new.remove_edge_of(i)
        new.remove_edge_of(j)
        new.add_edge((i, j))
        new.add_edge((ip, jp))
    return new


@dataclass(frozen=True)
class ClusterSummary:
    """Size, Euclidean barycenter and scatter of one cluster.

    scatter is the sum of squared deviations of member points from the
    barycenter (km^2); zero iff all points coincide.
    """

    points: tuple[int, ...]
    size: int
    centroid: tuple[float, float]
    scatter: float


def summarize_cluster(xy: np.ndarray, members: Iterable[int]) -> ClusterSummary:
    idx = sorted(int(i) for i in members)
    pts = xy[idx]
    c = pts.mean(axis=0)
    scatter = float(((pts - c) ** 2).sum())
    return ClusterSummary(tuple(idx), len(idx), (float(c[0]), float(c[1])), scatter)


def partition_stats(pattern: PointPattern, rho: Matching) -> list[ClusterSummary]:
    """One summary per cluster (singletons included), sorted by minimal index."""
    return [summarize_cluster(pattern.xy, c) for c in rho.clusters()]


def cluster_size_counts(rho: Matching, k: int):
    """Counts (N_1..N_k, Y_1..Y_k): clusters of each size and points they hold.

    Y_l = l * N_l, so sum(Y) = n and sum(N) = N(rho).
    """
    N = np.zeros(k, dtype=np.int64)
    covered = 0
    for members in rho._edges.values():
        s = len(members)
        N[s - 1] += 1
        covered += s
    N[0] += rho.n - covered
    Y = N * np.arange(1, k + 1)
    return N, Y


class ClusterStatsCache:
    """Incrementally maintained cluster sums for a pairwise matching.

    Tracks, for the clusters of a two-color matching, the total scatter
    sum_j delta^2_j and the cluster count, updating in O(1) per move. A full
    recomputation runs every `refresh_every` applied moves to stop float
    drift.
    """

    def __init__(self, pattern: PointPattern, rho: Matching, refresh_every: int = 100_000):
        self.pattern = pattern
        self.rho = rho
        self.refresh_every = int(refresh_every)
        self._moves_since_refresh = 0
        self.refresh()

    def refresh(self) -> None:
        self.total_scatter = 0.0
        for summ in partition_stats(self.pattern, self.rho):
            self.total_scatter += summ.scatter
        self.n_clusters = self.rho.n_clusters
        self._moves_since_refresh = 0

    @staticmethod
    def _pair_scatter(xy, i, j) -> float:
        d2 = float(((xy[i] - xy[j]) ** 2).sum())
        return d2 / 2.0

    def apply_move(self, i: int, j: int) -> MoveKind:
        """Apply rho∘(i,j) in place and update the cached totals."""
        xy = self.pattern.xy
        kind, ip, jp = move_classify(self.rho, i, j)
        if kind is MoveKind.DELETION:
            self.rho.remove_edge_of(i)
            self.total_scatter -= self._pair_scatter(xy, i, j)
            self.n_clusters += 1
        elif kind is MoveKind.ADDITION:
            self.rho.add_edge((i, j))
            self.total_scatter += self._pair_scatter(xy, i, j)
            self.n_clusters -= 1
        elif kind is MoveKind.SWITCH_I:
            self.rho.remove_edge_of(i)
            self.rho.add_edge((i, j))
            self.total_scatter += self._pair_scatter(xy, i, j) - self._pair_scatter(xy, i, jp)
        elif kind is MoveKind.SWITCH_J:
            self.rho.remove_edge_of(j)
            self.rho.add_edge((i, j))
            self.total_scatter += self._pair_scatter(xy, i, j) - self._pair_scatter(xy, ip, j)
        else:
            self.rho.remove_edge_of(i)
            self.rho.remove_edge_of(j)
            self.rho.add_edge((i, j))
            self.rho.add_edge((ip, jp))
            self.total_scatter += (
                self._pair_scatter(xy, i, j)
                + self._pair_scatter(xy, ip, jp)
                - self._pair_scatter(xy, i, jp)
                - self._pair_scatter(xy, ip, j)
            )
        self._moves_since_refresh += 1
        if self._moves_since_refresh >= self.refresh_every:
            self.refresh()
        return kind
