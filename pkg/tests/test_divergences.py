import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from contraction import divergences as dv


def quad_hellinger_normal(m1, v1, m2, v2):
    s1, s2 = math.sqrt(v1), math.sqrt(v2)
    f = lambda x: (math.sqrt(stats.norm.pdf(x, m1, s1)) - math.sqrt(stats.norm.pdf(x, m2, s2))) ** 2
    lo = min(m1 - 14 * s1, m2 - 14 * s2)
    hi = max(m1 + 14 * s1, m2 + 14 * s2)
    val, _ = integrate.quad(f, lo, hi, points=[m1, m2], limit=400, epsabs=1e-13, epsrel=1e-12)
    return val


def series_poisson(a, b, fn, top=200):
    x = np.arange(top + 1)
    pa, pb = stats.poisson.pmf(x, a), stats.poisson.pmf(x, b)
    keep = (pa > 0) & (pb > 0)
    return math.fsum(fn(pa[keep], pb[keep], x[keep]))


class TestHellinger:
    def test_identical_is_zero(self):
        assert dv.hellinger_sq(dv.normal_location(0), dv.normal_location(0)) == 0.0

    def test_normal_shift_two(self):
        expected = 2 * (1 - math.exp(-0.5))
        got = dv.hellinger_sq(dv.normal_location(0), dv.normal_location(2))
        assert got == pytest.approx(0.786939, abs=1e-6)
        assert got == pytest.approx(expected, abs=1e-14)
        assert quad_hellinger_normal(0, 1, 2, 1) == pytest.approx(got, abs=1e-10)

    def test_singular_bernoulli(self):
        assert dv.hellinger_sq(dv.bernoulli(0), dv.bernoulli(1)) == pytest.approx(2.0)

    def test_poisson_series_oracle(self):
        got = dv.hellinger_sq(dv.poisson(1), dv.poisson(2))
        oracle = series_poisson(1, 2, lambda p, q, x: (np.sqrt(p) - np.sqrt(q)) ** 2)
        assert got == pytest.approx(0.16442, abs=5e-6)
        assert got == pytest.approx(2 * (1 - math.exp(-((math.sqrt(2) - 1) ** 2) / 2)), abs=1e-15)
        assert got == pytest.approx(oracle, abs=1e-12)

    def test_numeric_route_matches_closed(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            m1, m2 = rng.normal(0, 2, 2)
            v1, v2 = rng.uniform(0.2, 4, 2)
            p, q = dv.normal(m1, v1), dv.normal(m2, v2)
            assert dv.hellinger_sq(p, q, "numeric") == pytest.approx(dv.hellinger_sq(p, q), abs=1e-10)

    def test_exponential_against_quad(self):
        a, b = 1.3, 0.4
        f = lambda x: (math.sqrt(math.exp(-x / a) / a) - math.sqrt(math.exp(-x / b) / b)) ** 2
        oracle, _ = integrate.quad(f, 0, np.inf, epsabs=1e-13)
        assert dv.hellinger_sq(dv.exponential(a), dv.exponential(b)) == pytest.approx(oracle, abs=1e-10)

    def test_grid_densities(self):
        x = np.linspace(-12, 14, 20001)
        p = dv.grid(x, stats.norm.pdf(x, 0, 1))
        q = dv.grid(x, stats.norm.pdf(x, 2, 1))
        assert dv.hellinger_sq(p, q) == pytest.approx(2 * (1 - math.exp(-0.5)), abs=1e-8)

    def test_unnormalized_grid_rejected(self):
        with pytest.raises(ValueError):
            dv.grid([0.0, 1.0], [1.0, 1.5])

    def test_incompatible_spaces(self):
        with pytest.raises(dv.IncompatibleDensities):
            dv.hellinger_sq(dv.normal(0, 1), dv.poisson(1))
        x = np.linspace(0, 1, 11)
        with pytest.raises(dv.IncompatibleDensities):
            dv.hellinger_sq(dv.grid(x, np.ones(11)), dv.grid(x * 2, np.full(11, 0.5)))

    def test_normal_families_share_space(self):
        a = dv.hellinger_sq(dv.normal_location(1.0), dv.normal(1.0, 1.0))
        assert a == pytest.approx(0.0, abs=1e-15)

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            dv.poisson(0.0)
        with pytest.raises(ValueError):
            dv.bernoulli(1.2)


def random_density(draw_kind, rng):
    if draw_kind == "normal":
        return dv.normal(rng.normal(0, 2), rng.uniform(0.1, 5))
    if draw_kind == "poisson":
        return dv.poisson(rng.uniform(0.05, 30))
    if draw_kind == "bernoulli":
        return dv.bernoulli(rng.uniform(0, 1))
    return dv.exponential(rng.uniform(0.1, 10))


class TestHellingerProperties:
    @pytest.mark.parametrize("kind", ["normal", "poisson", "bernoulli", "exponential"])
    def test_symmetry_and_range(self, kind):
        rng = np.random.default_rng(42)
        for _ in range(250):
            p, q = random_density(kind, rng), random_density(kind, rng)
            h = dv.hellinger_sq(p, q)
            assert 0.0 <= h <= 2.0
            assert h == pytest.approx(dv.hellinger_sq(q, p), abs=1e-14)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(st.floats(-5, 5), st.floats(0.1, 5)), min_size=3, max_size=3))
    def test_triangle_normal(self, params):
        a, b, c = (dv.normal(m, v) for m, v in params)
        h = lambda p, q: math.sqrt(dv.hellinger_sq(p, q))
        assert h(a, c) <= h(a, b) + h(b, c) + 1e-10

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(0.01, 50), min_size=3, max_size=3))
    def test_triangle_poisson(self, lams):
        a, b, c = (dv.poisson(x) for x in lams)
        h = lambda p, q: math.sqrt(dv.hellinger_sq(p, q))
        assert h(a, c) <= h(a, b) + h(b, c) + 1e-10


class TestKullbackLeibler:
    def test_self_divergence_zero(self):
        for d in (dv.normal(1, 2), dv.poisson(3), dv.bernoulli(0.3), dv.exponential(2)):
            assert dv.kl(d, d) == pytest.approx(0.0, abs=1e-15)
            assert dv.v_k0(d, d, 2) == pytest.approx(0.0, abs=1e-15)

    def test_normal_shift_two(self):
        p, q = dv.normal_location(0), dv.normal_location(2)
        assert dv.kl(p, q) == pytest.approx(2.0, abs=1e-14)
        assert dv.v_k0(p, q, 2) == pytest.approx(4.0, abs=1e-14)
        assert dv.v_k(p, q, 2) == pytest.approx(8.0, abs=1e-14)
        # quadrature oracle
        lr = lambda x: stats.norm.logpdf(x) - stats.norm.logpdf(x, 2)
        k_q, _ = integrate.quad(lambda x: stats.norm.pdf(x) * lr(x), -15, 15, epsabs=1e-13)
        v_q, _ = integrate.quad(lambda x: stats.norm.pdf(x) * (lr(x) - k_q) ** 2, -15, 15, epsabs=1e-13)
        assert k_q == pytest.approx(2.0, abs=1e-10)
        assert v_q == pytest.approx(4.0, abs=1e-10)

    def test_unequal_variance_against_quad(self):
        m1, v1, m2, v2 = 0.3, 0.7, -1.1, 2.5
        lr = lambda x: stats.norm.logpdf(x, m1, math.sqrt(v1)) - stats.norm.logpdf(x, m2, math.sqrt(v2))
        pdf = lambda x: stats.norm.pdf(x, m1, math.sqrt(v1))
        k_q, _ = integrate.quad(lambda x: pdf(x) * lr(x), -15, 15, epsabs=1e-13)
        v_q, _ = integrate.quad(lambda x: pdf(x) * (lr(x) - k_q) ** 2, -15, 15, epsabs=1e-13)
        v3, _ = integrate.quad(lambda x: pdf(x) * abs(lr(x) - k_q) ** 3, -15, 15, epsabs=1e-13)
        p, q = dv.normal(m1, v1), dv.normal(m2, v2)
        assert dv.kl(p, q) == pytest.approx(k_q, abs=1e-10)
        assert dv.v_k0(p, q, 2) == pytest.approx(v_q, abs=1e-10)
        assert dv.v_k0(p, q, 3) == pytest.approx(v3, abs=1e-8)

    def test_poisson_series(self):
        a, b = 3.2, 1.7
        k_s = series_poisson(a, b, lambda p, q, x: p * (np.log(p) - np.log(q)))
        v_s = series_poisson(a, b, lambda p, q, x: p * (np.log(p) - np.log(q) - k_s) ** 2)
        p, q = dv.poisson(a), dv.poisson(b)
        assert dv.kl(p, q) == pytest.approx(k_s, abs=1e-10)
        assert dv.v_k0(p, q, 2) == pytest.approx(v_s, abs=1e-10)
        assert dv.kl(p, q, "numeric") == pytest.approx(k_s, abs=1e-10)

    def test_bernoulli_support_violation(self):
        assert dv.kl(dv.bernoulli(0.5), dv.bernoulli(0.0)) == dv.INFINITE
        assert dv.v_k0(dv.bernoulli(0.5), dv.bernoulli(1.0)) == dv.INFINITE
        assert dv.kl(dv.bernoulli(0.0), dv.bernoulli(0.5)) == pytest.approx(math.log(2))

    def test_grid_support_violation(self):
        x = np.linspace(0, 2, 201)
        p = dv.grid(x, np.full(201, 0.5))
        q = dv.grid(x, np.where(x <= 1, 1.0, 0.0) / np.trapezoid(np.where(x <= 1, 1.0, 0.0), x))
        assert dv.kl(p, q) == dv.INFINITE
        assert math.isfinite(dv.kl(q, p))

    def test_exponential_closed_forms(self):
        a, b = 2.0, 0.5
        p, q = dv.exponential(a), dv.exponential(b)
        assert dv.kl(p, q, "numeric") == pytest.approx(dv.kl(p, q), abs=1e-8)
        assert dv.v_k0(p, q, 2, "numeric") == pytest.approx(dv.v_k0(p, q, 2), abs=1e-7)

    def test_v20_monte_carlo(self):
        rng = np.random.default_rng(42)
        p, q = dv.normal(0.2, 1.5), dv.normal(-0.4, 0.8)
        x = p.sample(rng, 10**6)
        lr = stats.norm.logpdf(x, 0.2, math.sqrt(1.5)) - stats.norm.logpdf(x, -0.4, math.sqrt(0.8))
        sq = (lr - lr.mean()) ** 2
        se = sq.std(ddof=1) / math.sqrt(sq.size)
        assert abs(dv.v_k0(p, q, 2) - lr.var(ddof=1)) < 4 * se

    def test_k_must_exceed_one(self):
        with pytest.raises(ValueError):
            dv.v_k0(dv.poisson(1), dv.poisson(2), 1)

    def test_product_experiment_additivity(self):
        # KL of an n-fold product of N(theta_i, 1/n) is n/2 times the squared distance
        rng = np.random.default_rng(42)
        t0, t1 = rng.normal(size=6), rng.normal(size=6)
        n = 9
        total = sum(dv.kl(dv.normal(a, 1 / n), dv.normal(b, 1 / n)) for a, b in zip(t0, t1))
        assert total == pytest.approx(0.5 * n * np.sum((t0 - t1) ** 2), rel=1e-12)


class TestAverageDistance:
    def test_identical_pairs(self):
        d = dv.normal(0, 1)
        assert dv.avg_hellinger_dn([dv.ComponentPair(d, d)] * 3) == 0.0

    def test_single_pair(self):
        p, q = dv.poisson(1), dv.poisson(2)
        assert dv.avg_hellinger_dn([(p, q)]) == pytest.approx(math.sqrt(dv.hellinger_sq(p, q)))

    def test_two_pairs(self):
        pairs = [(dv.normal(0, 1), dv.normal(2, 1)), (dv.normal(0, 1), dv.normal(0, 1))]
        assert dv.avg_hellinger_dn(pairs) == pytest.approx(math.sqrt((1 - math.exp(-0.5))), abs=1e-15)
        assert dv.avg_hellinger_dn(pairs) == pytest.approx(0.627271, abs=1e-6)
        assert dv.avg_hellinger_dn(pairs[::-1]) == dv.avg_hellinger_dn(pairs)

    def test_empty(self):
        with pytest.raises(ValueError):
            dv.avg_hellinger_dn([])


class TestNeighborhood:
    def test_zeros(self):
        assert dv.neighborhood_check([0, 0], [0, 0], 0.1)

    def test_boundary_included(self):
        eps = 0.3
        assert dv.neighborhood_check([eps**2, eps**2], [eps**2, eps**2], eps)

    def test_outside(self):
        eps = 0.5
        assert not dv.neighborhood_check([1.01 * eps**2], [0.0], eps)
        assert not dv.neighborhood_check([0.0], [1.01 * eps**2], eps)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            dv.neighborhood_check([0.1], [0.1, 0.2], 1.0)
