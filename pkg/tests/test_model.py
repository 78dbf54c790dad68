"""Likelihood, hyperedge weights, full conditionals."""

import math

import numpy as np
import pytest

from compclust.model import (
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
from compclust.model import _mh_sigma_raw
from compclust.patterns import (
    Matching,
    ObservationWindow,
    PointPattern,
    partition_stats,
    summarize_cluster,
)
from compclust.synth import simulate_model

from oracles import enumerate_partitions, labels_of_partition

WIN10 = ObservationWindow.rectangle(0, 10, 0, 10)


def uniform_g_one(window=None):
    """g identically 1 over the window bounds (unit-area convention)."""
    window = window or ObservationWindow.rectangle(0, 1, 0, 1)
    return CenterDensity.uniform(window)


def reference_log_posterior(pattern, part, params, g):
    """Independent evaluator: per-cluster factors written from scratch."""
    total = 0.0
    k = pattern.k
    for c in part:
        s = len(c)
        pts = pattern.xy[list(c)]
        cen = pts.mean(axis=0)
        scat = float(((pts - cen) ** 2).sum())
        c_s = math.comb(k, s) * s * 2 ** (s - 1)
        gv = float(g(cen[None, :])[0])
        total += (
            math.log(gv) + math.log(params.lam) + math.log(params.p_sizes[s - 1])
            - math.log(c_s) - 2 * (s - 1) * math.log(params.sigma)
            - math.pi * scat / (2 * params.sigma**2)
        )
    return total


class TestClusterLikelihood:
    def test_singleton_is_g_over_k(self):
        win = ObservationWindow.rectangle(0, 1, 0, 1)
        g = CenterDensity(np.full((2, 2), 0.013), 0, 0, 1, 1)
        pat = PointPattern([(0.5, 0.5)], [1], 13, win)
        (summ,) = partition_stats(pat, Matching.empty(pat))
        val = cluster_log_likelihood(summ, sigma=1.0, k=13, g=g)
        assert math.exp(val) == pytest.approx(0.013 / 13, rel=1e-12)

    def test_coincident_pair_direct_evaluation(self):
        # C(2,2)=1, s=2, (2 sigma^2)^1 = 2 -> denominator 4, h = 1/4
        win = ObservationWindow.rectangle(0, 1, 0, 1)
        pat = PointPattern([(0.5, 0.5), (0.5, 0.5)], [1, 2], 2, win)
        (summ,) = partition_stats(pat, Matching.from_edges(pat, [(0, 1)]))
        val = cluster_log_likelihood(summ, sigma=1.0, k=2, g=uniform_g_one())
        assert math.exp(val) == pytest.approx(1.0 / 4.0, rel=1e-12)

    def test_large_sigma_limit(self):
        win = ObservationWindow.rectangle(0, 1, 0, 1)
        pat = PointPattern([(0.2, 0.2), (0.8, 0.6)], [1, 2], 3, win)
        (summ,) = partition_stats(pat, Matching.from_edges(pat, [(0, 1)]))
        sigma = 1e8
        val = cluster_log_likelihood(summ, sigma=sigma, k=3, g=uniform_g_one())
        limit = -math.log(math.comb(3, 2) * 2 * (2 * sigma**2))
        assert val == pytest.approx(limit, abs=1e-10)

    def test_invalid_sigma(self):
        win = ObservationWindow.rectangle(0, 1, 0, 1)
        pat = PointPattern([(0.5, 0.5)], [1], 2, win)
        (summ,) = partition_stats(pat, Matching.empty(pat))
        with pytest.raises(ValueError):
            cluster_log_likelihood(summ, sigma=0.0, k=2, g=uniform_g_one())


class TestHyperedgeWeight:
    def test_coincident_pair_weight(self):
        # c1=2, c2=4: (c1^2 * lam * p2) / (c2 * (lam p1)^2) = 2 at unit values
        win = ObservationWindow.rectangle(0, 1, 0, 1)
        pat = PointPattern([(0.4, 0.4), (0.4, 0.4)], [1, 2], 2, win)
        params = ModelParams(sigma=1.0, p_sizes=[0.5, 0.5], lam=1.0)
        lw = hyperedge_log_weight([0, 1], pat, params, uniform_g_one())
        assert math.exp(lw) == pytest.approx(2.0, rel=1e-12)

    def test_pair_weight_distance_decay(self):
        d = 0.3
        win = ObservationWindow.rectangle(0, 1, 0, 1)
        pat = PointPattern([(0.2, 0.5), (0.2 + d, 0.5)], [1, 2], 2, win)
        params = ModelParams(sigma=1.0, p_sizes=[0.5, 0.5], lam=1.0)
        lw = hyperedge_log_weight([0, 1], pat, params, uniform_g_one())
        assert math.exp(lw) == pytest.approx(2.0 * math.exp(-math.pi * d * d / 4.0), rel=1e-12)

    def test_duplicate_marks_rejected(self):
        pat = PointPattern([(0, 0), (1, 1)], [1, 1], 2, WIN10)
        params = ModelParams(sigma=1.0, p_sizes=[0.5, 0.5], lam=1.0)
        with pytest.raises(ValueError):
            hyperedge_log_weight([0, 1], pat, params, uniform_g_one(WIN10))

    def test_weight_is_posterior_ratio(self):
        rng = np.random.default_rng(7)
        g = uniform_g_one(WIN10)
        for trial in range(25):
            k = int(rng.integers(2, 5))
            marks = rng.permutation([1 + i % k for i in range(6)]) if k > 2 else \
                np.array([1, 2, 1, 2, 1, 2])
            pat = PointPattern(rng.uniform(0, 10, (6, 2)), marks, k, WIN10)
            p = rng.dirichlet(np.ones(k))
            params = ModelParams(sigma=float(rng.uniform(0.5, 3)), p_sizes=p,
                                 lam=float(rng.uniform(0.5, 5)))
            # pick a random admissible edge of singletons
            size = int(rng.integers(2, k + 1))
            cand = []
            seen = set()
            for i in rng.permutation(6):
                mk = int(marks[i])
                if mk not in seen:
                    cand.append(int(i))
                    seen.add(mk)
                if len(cand) == size:
                    break
            if len(cand) < 2 or p[len(cand) - 1] <= 0:
                continue
            rho0 = Matching.empty(pat)
            rho1 = Matching.from_edges(pat, [cand])
            lw = hyperedge_log_weight(cand, pat, params, g)
            diff = (log_posterior_partition(pat, rho1, params, g)
                    - log_posterior_partition(pat, rho0, params, g))
            assert lw == pytest.approx(diff, rel=1e-10, abs=1e-10)


class TestLogPosterior:
    def test_empty_partition_value(self):
        rng = np.random.default_rng(1)
        pat = PointPattern(rng.uniform(0, 10, (5, 2)), [1, 2, 1, 2, 1], 2, WIN10)
        params = ModelParams(sigma=1.5, p_sizes=[0.6, 0.4], lam=3.0)
        g = uniform_g_one(WIN10)
        got = log_posterior_partition(pat, Matching.empty(pat), params, g)
        gv = math.log(1.0 / WIN10.area)
        expect = 5 * (gv + math.log(3.0) + math.log(0.6) - math.log(size_constant(2, 1)))
        assert got == pytest.approx(expect, rel=1e-12)

    def test_factorization_over_edges(self):
        rng = np.random.default_rng(2)
        g = uniform_g_one(WIN10)
        for _ in range(100):
            k = int(rng.integers(2, 5))
            n = 8
            marks = np.array([1 + i % k for i in range(n)])
            pat = PointPattern(rng.uniform(0, 10, (n, 2)), marks, k, WIN10)
            params = ModelParams(sigma=float(rng.uniform(0.5, 4)),
                                 p_sizes=rng.dirichlet(np.ones(k)) + 1e-3,
                                 lam=float(rng.uniform(1, 10)))
            params.p_sizes /= params.p_sizes.sum()
            # random admissible partition
            parts = []
            pool = list(rng.permutation(n))
            while pool:
                size = int(rng.integers(1, k + 1))
                chunk = []
                seen = set()
                rest = []
                for i in pool:
                    if len(chunk) < size and int(marks[i]) not in seen:
                        chunk.append(i)
                        seen.add(int(marks[i]))
                    else:
                        rest.append(i)
                parts.append(chunk)
                pool = rest
            rho = Matching.from_edges(pat, [c for c in parts if len(c) >= 2])
            lhs = (log_posterior_partition(pat, rho, params, g)
                   - log_posterior_partition(pat, Matching.empty(pat), params, g))
            rhs = sum(hyperedge_log_weight(c, pat, params, g)
                      for c in parts if len(c) >= 2)
            assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)

    def test_enumeration_matches_reference_evaluator(self):
        rng = np.random.default_rng(3)
        marks = np.array([1, 2, 3, 1, 2, 3])
        pat = PointPattern(rng.uniform(0, 10, (6, 2)), marks, 3, WIN10)
        params = ModelParams(sigma=1.2, p_sizes=[0.5, 0.3, 0.2], lam=4.0)
        g = uniform_g_one(WIN10)
        parts = enumerate_partitions(marks)
        lps = []
        refs = []
        for part in parts:
            rho = Matching.from_edges(pat, [c for c in part if len(c) >= 2])
            lps.append(log_posterior_partition(pat, rho, params, g))
            refs.append(reference_log_posterior(pat, part, params, g))
        lps = np.array(lps)
        refs = np.array(refs)
        assert np.allclose(lps, refs, rtol=1e-10)
        probs = np.exp(lps - lps.max())
        probs /= probs.sum()
        assert probs.sum() == pytest.approx(1.0)


class TestSigmaConditional:
    def test_all_singletons_flat(self):
        pat = PointPattern([(1, 1), (2, 2), (3, 3)], [1, 2, 1], 2, WIN10)
        rho = Matching.empty(pat)
        vals = sigma_log_conditional(np.array([0.5, 5.0, 30.0]), pat, rho, 50.0)
        assert np.allclose(vals, vals[0])

    def test_outside_support(self):
        pat = PointPattern([(1, 1), (2, 2)], [1, 2], 2, WIN10)
        rho = Matching.from_edges(pat, [(0, 1)])
        assert sigma_log_conditional(55.0, pat, rho, 50.0) == -math.inf
        assert sigma_log_conditional(-1.0, pat, rho, 50.0) == -math.inf

    def test_single_pair_mode(self):
        d = 2.0
        pat = PointPattern([(0, 0), (d, 0)], [1, 2], 2, WIN10)
        rho = Matching.from_edges(pat, [(0, 1)])
        grid = np.linspace(1e-3, 49.9, 200_000)
        vals = sigma_log_conditional(grid, pat, rho, 50.0)
        sigma_star = grid[int(np.argmax(vals))]
        assert sigma_star == pytest.approx(d * math.sqrt(math.pi) / 2.0, rel=1e-3)


class TestGibbsUpdates:
    def test_dirichlet_parameters_via_moments(self):
        # N1=3 pairs?? counts: rho with N1=3, N2=2 -> Dir(3.5, 2.5)
        rng = np.random.default_rng(11)
        pat = PointPattern(rng.uniform(0, 10, (7, 2)), [1, 1, 1, 1, 2, 2, 2], 2, WIN10)
        rho = Matching.from_edges(pat, [(0, 4), (1, 5)])  # 2 pairs + 3 singles
        N1, N2 = 3, 2
        draws = np.array([gibbs_update_p(rho, [0.5, 0.5], rng)[0] for _ in range(100_000)])
        assert draws.mean() == pytest.approx((0.5 + N1) / (1.0 + N1 + N2), abs=0.005)

    def test_dirichlet_empty_matching(self):
        rng = np.random.default_rng(12)
        pat = PointPattern(np.zeros((6, 2)), [1, 2, 1, 2, 1, 2], 2, WIN10)
        rho = Matching.empty(pat)
        draws = np.array([gibbs_update_p(rho, [1.0, 1.0], rng)[0] for _ in range(100_000)])
        # Dir(1+6, 1): mean 7/8
        assert draws.mean() == pytest.approx(7.0 / 8.0, abs=0.005)

    def test_gamma_parameters_via_moments(self):
        rng = np.random.default_rng(13)
        pat = PointPattern(np.zeros((10, 2)), [1, 2] * 5, 2, WIN10)
        rho = Matching.from_edges(pat, [(0, 1), (2, 3), (4, 5), (6, 7), (8, 9)])
        assert rho.n_clusters == 5
        draws = np.array([gibbs_update_lambda(rho, 300.0, 1.0, rng) for _ in range(100_000)])
        assert draws.mean() == pytest.approx(305 * 0.5, abs=0.5)

    def test_gamma_empty_matching(self):
        rng = np.random.default_rng(14)
        pat = PointPattern(np.zeros((0, 2)), [], 2, WIN10)
        rho = Matching.empty(pat)
        draws = np.array([gibbs_update_lambda(rho, 4.0, 2.0, rng) for _ in range(200_000)])
        # Gamma(4, 2/3): mean 8/3
        assert draws.mean() == pytest.approx(8.0 / 3.0, abs=0.02)


class TestSigmaMH:
    def test_zero_step_keeps_sigma(self):
        rng = np.random.default_rng(0)
        pat = PointPattern([(0, 0), (1, 0)], [1, 2], 2, WIN10)
        rho = Matching.from_edges(pat, [(0, 1)])
        out = mh_update_sigma(pat, rho, 3.3, 50.0, rng, step_scale=0.0, n_inner=5)
        assert out == 3.3

    def test_uniform_target_ks(self):
        # all singletons: the conditional is Uniform(0, sigma_max)
        rng = np.random.default_rng(1)
        sig = 25.0
        samples = np.empty(100_000)
        for t in range(samples.size):
            sig = _mh_sigma_raw(0, 0.0, sig, 50.0, rng, step_scale=0.8, n_inner=5)
            samples[t] = sig
        qs = np.sort(samples) / 50.0
        ks = np.max(np.abs(qs - (np.arange(1, qs.size + 1) / qs.size)))
        assert ks < 0.02

    def test_single_pair_histogram_vs_quadrature(self):
        d = 2.0
        pat = PointPattern([(0, 0), (d, 0)], [1, 2], 2, WIN10)
        rho = Matching.from_edges(pat, [(0, 1)])
        rng = np.random.default_rng(2)
        sig = 1.0
        samples = np.empty(200_000)
        for t in range(samples.size):
            sig = mh_update_sigma(pat, rho, sig, 50.0, rng, step_scale=0.7, n_inner=5)
            samples[t] = sig
        edges = np.linspace(0, 12, 49)  # upper tail has negligible mass
        grid = np.linspace(1e-4, 50, 200_001)
        dens = np.exp(sigma_log_conditional(grid, pat, rho, 50.0))
        dens /= np.trapezoid(dens, grid)
        cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) / 2 * np.diff(grid))])
        exact = np.interp(edges, grid, cdf)
        exact = np.diff(np.concatenate([exact, [1.0]]))
        emp, _ = np.histogram(samples, bins=np.concatenate([edges, [50.0]]))
        emp = emp / samples.size
        tv = 0.5 * np.abs(emp - exact).sum()
        assert tv < 0.02


class TestConjugacyGeweke:
    def test_successive_conditional_preserves_priors(self):
        """Forward draws vs prior->model->Gibbs cycles agree on moments.

        Validates the Dirichlet/Gamma conditional parameterizations and the
        sign of the sigma conditional at once: any mismatch drifts the
        stationary law away from the prior.
        """
        k = 3
        win = ObservationWindow.rectangle(0, 8, 0, 8)
        g = CenterDensity.uniform(win)
        hyper = Hyperparams(sigma_max=4.0, lambda_shape=3.0, lambda_scale=1.0,
                            alpha=(0.8, 0.8, 0.8))
        rng = np.random.default_rng(42)
        alpha = np.array(hyper.alpha)

        n_cycles = 4000
        sig = 2.0
        p = rng.dirichlet(alpha)
        lam = rng.gamma(hyper.lambda_shape, hyper.lambda_scale)
        rec = np.empty((n_cycles, 3))
        for t in range(n_cycles):
            params = ModelParams(sigma=max(sig, 1e-6), p_sizes=p, lam=max(lam, 1e-9))
            pattern, rho = simulate_model(params, k, win, rng, g=g)
            p = gibbs_update_p(rho, alpha, rng)
            lam = gibbs_update_lambda(rho, hyper.lambda_shape, hyper.lambda_scale, rng)
            sig = mh_update_sigma(pattern, rho, sig, hyper.sigma_max, rng,
                                  step_scale=0.8, n_inner=10)
            rec[t] = (sig, p[0], lam)
        # prior moments: sigma ~ U(0,4); p1 ~ Beta(0.8, 1.6); lam ~ Gamma(3,1)
        tol = 4.0 / math.sqrt(n_cycles)
        assert rec[:, 0].mean() == pytest.approx(2.0, abs=3 * tol * 4 / math.sqrt(12))
        assert rec[:, 1].mean() == pytest.approx(0.8 / 2.4, abs=3 * tol * 0.3)
        assert rec[:, 2].mean() == pytest.approx(3.0, abs=3 * tol * math.sqrt(3.0))
