import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special, stats

from contraction import divergences as dv
from contraction.covering import poisson_bracketing
from contraction.models import inid


def unnormalized_poisson(lam, mu, x):
    return np.exp(-lam + x * np.log(mu) - special.gammaln(x + 1))


class TestGeneralizedHellinger:
    def test_equal_pairs(self):
        assert inid.poisson_generalized_hellinger(1.3, 1.7, 1.3, 1.7) == pytest.approx(0.0, abs=1e-15)

    def test_reduces_to_poisson_hellinger(self):
        ref = dv.hellinger_sq(dv.poisson(1.0), dv.poisson(2.0))
        assert inid.poisson_generalized_hellinger(1, 1, 2, 2) == pytest.approx(ref, abs=1e-12)

    def test_series_oracle(self):
        rng = np.random.default_rng(42)
        x = np.arange(301)
        for _ in range(1000):
            l1, m1, l2, m2 = rng.uniform(0.5, 5, 4)
            series = np.sum((np.sqrt(unnormalized_poisson(l1, m1, x)) - np.sqrt(unnormalized_poisson(l2, m2, x))) ** 2)
            assert inid.poisson_generalized_hellinger(l1, m1, l2, m2) == pytest.approx(series, abs=1e-10)

    def test_lipschitz_bound(self):
        rng = np.random.default_rng(42)
        for l1, m1, l2, m2 in rng.uniform(1, 2, (1000, 4)):
            value = inid.poisson_generalized_hellinger(l1, m1, l2, m2)
            assert value <= inid.generalized_hellinger_bound(l1, m1, l2, m2, 1.0, 2.0)


class TestSievePosterior:
    def test_single_element(self):
        np.testing.assert_array_equal(inid.sieve_posterior([[1.0, 2.0]], [0, 3]), [1.0])

    def test_posterior_odds(self):
        # the likelihood ratio of means 2 vs 1 at one count x is 2^x e^{-1}
        post = inid.sieve_posterior([[1.0], [2.0]], [3])
        assert post[1] / post[0] == pytest.approx(math.exp(3 * math.log(2) - 1), rel=1e-12)

    def test_three_element_toy(self):
        links = np.array([[1.0, 1.5], [2.0, 2.0], [1.2, 3.0]])
        x = np.array([2, 4])
        lik = [math.exp(-m1) * m1**2 / 2 * math.exp(-m2) * m2**4 / 24 for m1, m2 in links]
        np.testing.assert_allclose(inid.sieve_posterior(links, x), np.array(lik) / sum(lik), rtol=0, atol=1e-12)

    def test_rejects_bad_counts(self):
        with pytest.raises(ValueError):
            inid.sieve_posterior([[1.0]], [-1])
        with pytest.raises(ValueError):
            inid.sieve_posterior([[1.0]], [0.5])

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=20), st.floats(-500, 500))
    def test_shift_invariance(self, loglik, shift):
        base = inid.normalize_log_weights(loglik)
        assert base.sum() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(inid.normalize_log_weights(np.array(loglik) + shift), base, atol=1e-12)


@pytest.fixture(scope="module")
def setup():
    z = np.array([0.1, 0.3, 0.3, 0.6, 0.8, 0.95])
    sieve = poisson_bracketing(0.8, 1.0, 3.0, z)
    truth = lambda t: 1 + 2 * np.asarray(t) ** 2
    data = inid.simulate_counts(truth, z, 42)
    return sieve, data, truth


class TestStructuredSieve:
    def test_evidence_matches_enumeration(self, setup):
        sieve, data, _ = setup
        links = sieve.enumerate()
        assert links.shape[0] == round(math.exp(sieve.log_count))
        x = data.counts
        loglik = (x * np.log(links) - links).sum(axis=1)
        post = inid.structured_sieve_posterior(sieve, data)
        assert post.log_evidence == pytest.approx(special.logsumexp(loglik) - math.log(links.shape[0]), abs=1e-10)

    def test_distance_draws_match_enumeration(self, setup):
        sieve, data, truth = setup
        links = sieve.enumerate()
        weights = inid.sieve_posterior(links, data.counts)
        d2 = dv.poisson_hellinger_sq(links, truth(data.covariates)[None, :]).mean(axis=1)
        exact_mean = weights @ d2
        draws = inid.structured_sieve_posterior(sieve, data).sample_distances(truth, 40_000, 7) ** 2
        assert abs(draws.mean() - exact_mean) < 4 * draws.std() / math.sqrt(draws.size)
        # the draw distribution matches the exact one
        values = np.unique(np.round(d2, 12))
        exact_cdf = np.array([weights[np.round(d2, 12) <= v].sum() for v in values])
        emp_cdf = np.array([np.mean(np.round(draws, 12) <= v) for v in values])
        assert np.max(np.abs(exact_cdf - emp_cdf)) < 0.015

    def test_mass_shrinks_with_n(self):
        model = inid.PoissonSieveModel(lambda t: 1 + 2 * np.asarray(t) ** 2)
        medians = []
        for n in (100, 800):
            sieve = model.sieve(n)
            data = inid.simulate_counts(model.truth, inid.uniform_covariates(n), n)
            medians.append(np.median(inid.structured_sieve_posterior(sieve, data).sample_distances(model.truth, 2000, 1)))
        assert medians[1] < medians[0]


class TestHellingerBernoulli:
    def test_values(self):
        assert inid.hellinger_bernoulli(0.3, 0.3) == 0.0
        assert inid.hellinger_bernoulli(0.0, 1.0) == pytest.approx(2.0)
        assert inid.hellinger_bernoulli(0.25, 0.75) == pytest.approx(2 * (math.sqrt(0.75) - 0.5) ** 2, abs=1e-15)
        assert inid.hellinger_bernoulli(0.25, 0.75) == pytest.approx(0.267949, abs=1e-6)

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_matches_divergences(self, p, q):
        value = inid.hellinger_bernoulli(p, q)
        assert 0 <= value <= 2 + 1e-15
        assert value == pytest.approx(dv.hellinger_sq(dv.bernoulli(p), dv.bernoulli(q)), abs=1e-12)


def three_atom_sampler(links, probs):
    def sample(rng, size, at):
        pick = rng.choice(len(links), size=size, p=probs)
        return np.array([f(at) for f in links])[pick]
    return sample


class TestBinaryPosterior:
    def test_no_data_gives_uniform_weights(self):
        model = inid.BinaryModel()
        data = inid.BinaryData(np.array([]), np.array([], dtype=int))
        post = inid.binary_posterior_is(model, data, 10**4, 42)
        np.testing.assert_allclose(post.weights, 1e-4)
        assert post.ess == pytest.approx(1e4)

    def test_success_tilts_upward(self):
        model = inid.BinaryModel()
        data = inid.BinaryData(np.array([0.4]), np.array([1]))
        post = inid.binary_posterior_is(model, data, 10**4, 42)
        assert post.mean()[0] >= post.values[:, 0].mean()

    def test_three_atom_oracle(self):
        links = [lambda z: special.expit((z - c) / 0.2) for c in (0.3, 0.5, 0.7)]
        probs = np.array([0.2, 0.5, 0.3])
        model = inid.BinaryModel()
        data = inid.simulate_binary(model, 20, 42)
        post = inid.binary_posterior_is(model, data, 10**4, 7, three_atom_sampler(links, probs))
        z = post.atoms
        lik = np.array([np.prod(np.where(data.responses == 1, f(data.covariates), 1 - f(data.covariates))) for f in links])
        w = probs * lik / np.sum(probs * lik)
        exact = w @ np.array([f(z) for f in links])
        assert np.all(np.abs(post.mean() - exact) <= 4 * post.mean_se() + 1e-12)

    def test_draw_doubling(self):
        model = inid.BinaryModel()
        data = inid.simulate_binary(model, 30, 3)
        a = inid.binary_posterior_is(model, data, 10**4, 1)
        b = inid.binary_posterior_is(model, data, 2 * 10**4, 2)
        se = np.sqrt(a.mean_se() ** 2 + b.mean_se() ** 2)
        assert np.all(np.abs(a.mean() - b.mean()) <= 4 * se)

    def test_guards(self):
        model = inid.BinaryModel()
        with pytest.raises(ValueError):
            inid.binary_posterior_is(model, inid.simulate_binary(model, 10, 0), 100, 0)
        with pytest.raises(ValueError):
            inid.binary_posterior_is(model, inid.simulate_binary(model, 501, 0), 10**4, 0)

    def test_unreliable_flag(self):
        model = inid.BinaryModel()
        data = inid.simulate_binary(model, 500, 5)
        post = inid.binary_posterior_is(model, data, 10**4, 5)
        assert post.reliable == (post.ess >= 50)

    def test_true_link_is_valid(self):
        inid.BinaryModel().check()

    def test_covariate_csv(self, tmp_path):
        path = tmp_path / "z.csv"
        path.write_text("z\n0.1\n0.5\n0.9\n")
        np.testing.assert_array_equal(inid.read_covariates(path), [0.1, 0.5, 0.9])
        path.write_text("x\n0.1\n")
        with pytest.raises(ValueError):
            inid.read_covariates(path)


class TestGridPosterior:
    def test_normal_location_conjugate(self):
        model = inid.ParametricModel("normal-location", -5, 5)
        x = model.simulate(0.7, 400, 42)
        mesh = 1e-3
        post = inid.grid_posterior(model, x, mesh)
        assert abs(post.mean() - x.mean()) < mesh
        sd = math.sqrt(post.probs @ (post.grid - post.mean()) ** 2)
        assert sd == pytest.approx(1 / math.sqrt(400), rel=1e-3)

    def test_uniform_endpoint_shape(self):
        model = inid.ParametricModel("uniform-endpoint", 0.5, 3.0)
        x = model.simulate(1.3, 200, 42)
        post = inid.grid_posterior(model, x, 1e-4)
        assert post.mode() == pytest.approx(x.max(), abs=1e-4)
        assert np.all(post.probs[post.grid < x.max()] == 0)
        kept = post.grid >= x.max()
        ratio = post.probs[kept][1:] / post.probs[kept][:-1]
        np.testing.assert_allclose(ratio, (post.grid[kept][:-1] / post.grid[kept][1:]) ** 200, rtol=1e-9)

    def test_grid_too_small(self):
        model = inid.ParametricModel("normal-location", 0.9, 2.0)
        x = model.simulate(0.5, 100, 1)
        with pytest.raises(inid.GridTooSmall):
            inid.grid_posterior(model, x, 1e-3)

    @pytest.mark.parametrize("family,theta,target", [("uniform-endpoint", 1.0, -1.0), ("normal-location", 0.0, -0.5)])
    def test_radius_slope(self, family, theta, target):
        model = inid.ParametricModel(family, 0.5 if family == "uniform-endpoint" else -3.0, 2.0)
        ns = np.array([50, 100, 200, 400, 800, 1600, 3200])
        med = []
        for n in ns:
            mesh = model.rate(3200) / 10
            radii = [inid.grid_posterior(model, model.simulate(theta, n, 100 * n + r), mesh).radius(theta) for r in range(30)]
            med.append(np.median(radii))
        slope = np.polyfit(np.log(ns[1:]), np.log(med[1:]), 1)[0]
        assert abs(slope - target) < (0.15 if family == "uniform-endpoint" else 0.08)
