"""Core types: matchings, moves, cluster summaries."""

import numpy as np
import pytest

from compclust.patterns import (
    ClusterStatsCache,
    Matching,
    MoveKind,
    ObservationWindow,
    PointPattern,
    cluster_size_counts,
    move_apply,
    move_classify,
    partition_stats,
)

from oracles import enumerate_matchings


def two_color_pattern(n1, n2, seed=0):
    rng = np.random.default_rng(seed)
    xy = rng.uniform(0, 10, (n1 + n2, 2))
    marks = np.array([1] * n1 + [2] * n2)
    win = ObservationWindow.rectangle(0, 10, 0, 10)
    return PointPattern(xy, marks, 2, win)


class TestWindow:
    def test_rectangle_contains_and_area(self):
        win = ObservationWindow.rectangle(0, 4, 0, 2)
        assert win.area == 8
        assert win.contains([(1, 1), (5, 1)]).tolist() == [True, False]

    def test_buffer_extends_rectangle(self):
        win = ObservationWindow.rectangle(0, 4, 0, 2, buffer=3.0)
        assert win.contains([(-2, -2)]).all()
        assert win.area == 10 * 8

    def test_polygon_window(self):
        win = ObservationWindow.from_polygon([(0, 0), (4, 0), (4, 4), (0, 4)])
        assert win.area == pytest.approx(16)
        assert win.contains([(2, 2)]).all()
        assert not win.contains([(5, 5)]).any()
        d = win.distance_to_boundary([(2, 2), (1, 2)])
        assert d[0] == pytest.approx(2.0)
        assert d[1] == pytest.approx(1.0)

    def test_degenerate_window_rejected(self):
        with pytest.raises(ValueError):
            ObservationWindow.rectangle(0, 0, 0, 1)
        with pytest.raises(ValueError):
            ObservationWindow.rectangle(0, 1, 0, 1, buffer=-1)


class TestMatchingInvariants:
    def test_duplicate_mark_edge_rejected(self):
        pat = two_color_pattern(2, 2)
        m = Matching.empty(pat)
        with pytest.raises(ValueError):
            m.add_edge((0, 1))  # both red

    def test_overlapping_edges_rejected(self):
        pat = two_color_pattern(2, 2)
        m = Matching.from_edges(pat, [(0, 2)])
        with pytest.raises(ValueError):
            m.add_edge((0, 3))

    def test_cluster_count(self):
        pat = two_color_pattern(3, 3)
        m = Matching.from_edges(pat, [(0, 3), (1, 4)])
        assert m.n_clusters == 2 + 2  # two pairs, two singletons

    def test_marks_out_of_range(self):
        win = ObservationWindow.rectangle(0, 1, 0, 1)
        with pytest.raises(ValueError):
            PointPattern([(0, 0)], [3], 2, win)


class TestMoves:
    def test_addition_on_empty(self):
        pat = two_color_pattern(2, 2)
        rho = Matching.empty(pat)
        kind, ip, jp = move_classify(rho, 0, 2)
        assert kind is MoveKind.ADDITION and ip is None and jp is None
        new = move_apply(rho, 0, 2)
        assert new.edges == {frozenset((0, 2))}
        assert rho.edges == set()  # input untouched

    def test_deletion(self):
        pat = two_color_pattern(2, 2)
        rho = Matching.from_edges(pat, [(0, 2)])
        kind, _, _ = move_classify(rho, 0, 2)
        assert kind is MoveKind.DELETION
        assert move_apply(rho, 0, 2).edges == set()

    def test_switch_reports_partner(self):
        # rho = {(red 0, blue 3)}; proposing (0, 2) switches 0's partner
        pat = two_color_pattern(2, 2)
        rho = Matching.from_edges(pat, [(0, 3)])
        kind, ip, jp = move_classify(rho, 0, 2)
        assert kind is MoveKind.SWITCH_I and jp == 3 and ip is None
        assert move_apply(rho, 0, 2).edges == {frozenset((0, 2))}

    def test_double_switch(self):
        pat = two_color_pattern(2, 2)
        rho = Matching.from_edges(pat, [(0, 2), (1, 3)])
        kind, ip, jp = move_classify(rho, 0, 3)
        assert kind is MoveKind.DOUBLE_SWITCH and ip == 1 and jp == 2
        new = move_apply(rho, 0, 3)
        assert new.edges == {frozenset((0, 3)), frozenset((1, 2))}

    def test_same_color_pair_rejected(self):
        pat = two_color_pattern(2, 2)
        with pytest.raises(ValueError):
            move_classify(Matching.empty(pat), 0, 1)
        with pytest.raises(IndexError):
            move_classify(Matching.empty(pat), 0, 9)

    def test_addition_deletion_involution_everywhere(self):
        # double application returns to the start whenever the first move is
        # an addition or a deletion
        pat = two_color_pattern(4, 4, seed=2)
        rng = np.random.default_rng(0)
        for pairs in [(), ((0, 4),), ((0, 4), (1, 5)), ((0, 5), (2, 6), (3, 7))]:
            rho = Matching.from_edges(pat, pairs)
            for i in range(4):
                for j in range(4, 8):
                    kind, _, _ = move_classify(rho, i, j)
                    if kind in (MoveKind.ADDITION, MoveKind.DELETION):
                        assert move_apply(move_apply(rho, i, j), i, j) == rho

    def test_every_move_has_constructive_reverse(self):
        pat = two_color_pattern(4, 4, seed=3)
        for pairs in [(), ((0, 4), (1, 5)), ((0, 6), (1, 4), (2, 5))]:
            rho = Matching.from_edges(pat, pairs)
            for i in range(4):
                for j in range(4, 8):
                    kind, ip, jp = move_classify(rho, i, j)
                    new = move_apply(rho, i, j)
                    if kind in (MoveKind.ADDITION, MoveKind.DELETION):
                        rev = (i, j)
                    elif kind is MoveKind.SWITCH_I:
                        rev = (i, jp)
                    elif kind is MoveKind.SWITCH_J:
                        rev = (ip, j)
                    else:
                        rev = (i, jp)
                    assert move_apply(new, *rev) == rho

    def test_exhaustive_move_validity_small(self):
        # every move from every matching keeps all invariants (n <= 8)
        pat = two_color_pattern(4, 4, seed=4)
        for pairs in enumerate_matchings(4, 4):
            rho = Matching.from_edges(pat, [(i, j + 4) for i, j in pairs])
            for i in range(4):
                for j in range(4, 8):
                    move_apply(rho, i, j).check()


class TestPartitionStats:
    def test_pair_cluster(self):
        win = ObservationWindow.rectangle(0, 10, 0, 10)
        pat = PointPattern([(0, 0), (2, 0)], [1, 2], 2, win)
        (summ,) = partition_stats(pat, Matching.from_edges(pat, [(0, 1)]))
        assert summ.size == 2
        assert summ.centroid == (1.0, 0.0)
        assert summ.scatter == pytest.approx(2.0)

    def test_singleton(self):
        win = ObservationWindow.rectangle(0, 10, 0, 10)
        pat = PointPattern([(5, 5)], [1], 1, win)
        (summ,) = partition_stats(pat, Matching.empty(pat))
        assert summ.size == 1 and summ.scatter == 0.0 and summ.centroid == (5.0, 5.0)

    def test_triple_cluster_hand_check(self):
        # {(0,0), (3,0), (0,3)}: centroid (1,1), scatter 12
        win = ObservationWindow.rectangle(0, 10, 0, 10)
        pat = PointPattern([(0, 0), (3, 0), (0, 3)], [1, 2, 3], 3, win)
        (summ,) = partition_stats(pat, Matching.from_edges(pat, [(0, 1, 2)]))
        assert summ.centroid == (1.0, 1.0)
        assert summ.scatter == pytest.approx(12.0)

    def test_order_is_canonical(self):
        pat = two_color_pattern(3, 3)
        rho = Matching.from_edges(pat, [(2, 5), (0, 4)])
        stats = partition_stats(pat, rho)
        assert [s.points[0] for s in stats] == [0, 1, 2, 3]


class TestSizeCounts:
    def test_three_singletons_one_pair(self):
        pat = two_color_pattern(3, 2)
        rho = Matching.from_edges(pat, [(0, 3)])
        N, Y = cluster_size_counts(rho, 2)
        assert N.tolist() == [3, 1]
        assert Y.tolist() == [3, 2]

    def test_empty_matching(self):
        pat = two_color_pattern(4, 3)
        N, Y = cluster_size_counts(Matching.empty(pat), 2)
        assert N.tolist() == [7, 0] and Y.tolist() == [7, 0]

    def test_random_partitions_tally(self):
        rng = np.random.default_rng(1)
        win = ObservationWindow.rectangle(0, 10, 0, 10)
        k = 4
        for _ in range(20):
            n = 20
            marks = rng.integers(1, k + 1, n)
            pat = PointPattern(rng.uniform(0, 10, (n, 2)), marks, k, win)
            rho = Matching.empty(pat)
            # grow random valid clusters
            free = list(range(n))
            rng.shuffle(free)
            while len(free) >= 2:
                size = int(rng.integers(2, k + 1))
                chunk, rest = free[:size], free[size:]
                chosen = []
                seen = set()
                for i in chunk:
                    if marks[i] not in seen:
                        chosen.append(i)
                        seen.add(int(marks[i]))
                if len(chosen) >= 2 and rng.random() < 0.8:
                    rho.add_edge(chosen)
                    free = [i for i in rest + chunk if i not in chosen]
                else:
                    free = rest
            N, Y = cluster_size_counts(rho, k)
            # brute-force tally over clusters
            sizes = [len(c) for c in rho.clusters()]
            for l in range(1, k + 1):
                assert N[l - 1] == sizes.count(l)
            assert Y.sum() == n
            assert N.sum() == rho.n_clusters


class TestClusterStatsCache:
    def test_incremental_matches_scratch(self):
        rng = np.random.default_rng(5)
        pat = two_color_pattern(6, 6, seed=6)
        rho = Matching.empty(pat)
        cache = ClusterStatsCache(pat, rho, refresh_every=10**9)
        for _ in range(4000):
            i = int(rng.integers(0, 6))
            j = int(rng.integers(6, 12))
            cache.apply_move(i, j)
            if rng.random() < 0.01:
                scratch = sum(s.scatter for s in partition_stats(pat, rho))
                assert cache.total_scatter == pytest.approx(scratch, rel=1e-9, abs=1e-12)
                assert cache.n_clusters == rho.n_clusters
        scratch = sum(s.scatter for s in partition_stats(pat, rho))
        assert cache.total_scatter == pytest.approx(scratch, rel=1e-9, abs=1e-12)
