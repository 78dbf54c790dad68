"""Independent oracles used across the test suite.

These deliberately avoid the package's own code paths: matchings and
partitions are enumerated recursively, the best matching comes from a bitmask
dynamic program, and probabilities are normalized by explicit summation.
"""

from __future__ import annotations

import numpy as np


def enumerate_matchings(n1: int, n2: int):
    """All partial matchings of a complete n1 x n2 bipartite graph."""
    out = []

    def rec(i, used, edges):
        if i == n1:
            out.append(tuple(sorted(edges)))
            return
        rec(i + 1, used, edges)
        for j in range(n2):
            if j not in used:
                rec(i + 1, used | {j}, edges + [(i, j)])

    rec(0, frozenset(), [])
    return out


def matching_distribution(w: np.ndarray):
    """Exact probabilities over matchings under weights w (zero = forbidden edge)."""
    n1, n2 = w.shape
    logw = np.full_like(w, -np.inf)
    pos = w > 0
    logw[pos] = np.log(w[pos])
    items = []
    for m in enumerate_matchings(n1, n2):
        lw = sum(logw[i, j] for i, j in m)
        if np.isfinite(lw):
            items.append((m, lw))
    mx = max(lw for _, lw in items)
    weights = {m: np.exp(lw - mx) for m, lw in items}
    Z = sum(weights.values())
    return {m: v / Z for m, v in weights.items()}


def best_matching_dp(w: np.ndarray):
    """Maximum-weight partial matching by bitmask DP over blue subsets."""
    n1, n2 = w.shape
    logw = np.where(w > 0, np.log(np.maximum(w, 1e-300)), -np.inf)
    NEG = -np.inf
    cur = {0: (0.0, ())}
    for i in range(n1):
        nxt = {}
        for mask, (val, edges) in cur.items():
            if mask not in nxt or nxt[mask][0] < val:
                nxt[mask] = (val, edges)
            for j in range(n2):
                bit = 1 << j
                if mask & bit or not np.isfinite(logw[i, j]):
                    continue
                cand = val + logw[i, j]
                key = mask | bit
                if key not in nxt or nxt[key][0] < cand:
                    nxt[key] = (cand, edges + ((i, j),))
        cur = nxt
    best_val, best_edges = max(cur.values(), key=lambda t: t[0])
    return tuple(sorted(best_edges)), best_val


def enumerate_partitions(marks):
    """All partitions of range(n) with pairwise-distinct marks per cluster."""
    n = len(marks)
    out = []

    def rec(i, clusters):
        if i == n:
            out.append([tuple(c) for c in clusters])
            return
        for c in clusters:
            if all(marks[j] != marks[i] for j in c):
                c.append(i)
                rec(i + 1, clusters)
                c.pop()
        clusters.append([i])
        rec(i + 1, clusters)
        clusters.pop()

    rec(0, [])
    return out


def labels_of_partition(part, n):
    lab = np.zeros(n, dtype=np.int64)
    for c in part:
        m = min(c)
        for i in c:
            lab[i] = m
    return lab


def tv_distance(empirical: dict, exact: dict) -> float:
    """Total variation between an empirical count/probability dict and exact probs."""
    tot = sum(empirical.values())
    tv = 0.0
    for key, p in exact.items():
        tv += abs(empirical.get(key, 0) / tot - p)
    for key, v in empirical.items():
        if key not in exact:
            tv += v / tot
    return 0.5 * tv


def pairs_to_partner(pairs, n1):
    pr = np.full(n1, -1, dtype=np.int64)
    for i, j in pairs:
        pr[i] = j
    return pr
