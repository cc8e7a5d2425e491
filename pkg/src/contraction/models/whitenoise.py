"""Gaussian sequence (white noise) model with a conjugate sieve prior.

Observations are x_i = theta0_i + z_i / sqrt(n), i = 1..k_max.  The prior
puts independent N(0, sigma_i^2) on the first k coordinates and zero on the
rest, so the posterior is available coordinatewise in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import zeta

from ..priors import SequencePrior
from ..seeding import make_rng


@dataclass
class WhiteNoiseData:
    n: float
    x: np.ndarray
    seed: object = None

    @property
    def k_max(self) -> int:
        return self.x.size


@dataclass
class CoordinatePosterior:
    mean: np.ndarray
    variance: np.ndarray


@dataclass
class PowerSequence:
    """theta_i = scale * i^-(alpha + 1), with the exact tail beyond any index."""

    alpha: float
    scale: float = 1.0

    def values(self, k: int) -> np.ndarray:
        i = np.arange(1, k + 1, dtype=float)
        return self.scale * i ** -(self.alpha + 1)

    def tail_sq(self, k: int) -> float:
        """sum_{i > k} theta_i^2."""
        return float(self.scale**2 * zeta(2 * self.alpha + 2, k + 1))


def simulate(theta0, n: float, k_max: int, seed) -> WhiteNoiseData:
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = make_rng(seed)
    th = _coords(theta0, k_max)
    return WhiteNoiseData(n, th + rng.standard_normal(k_max) / math.sqrt(n), seed)


def _coords(theta0, k_max):
    if isinstance(theta0, PowerSequence):
        return theta0.values(k_max)
    th = np.zeros(k_max)
    t = np.asarray(theta0, dtype=float)[:k_max]
    th[: t.size] = t
    return th


def _tail(theta0, k_max):
    if isinstance(theta0, PowerSequence):
        return theta0.tail_sq(k_max)
    t = np.asarray(theta0, dtype=float)
    return float(np.sum(t[k_max:] ** 2))


def posterior(data: WhiteNoiseData, prior: SequencePrior) -> CoordinatePosterior:
    """Conjugate update of the first k coordinates."""
    if prior.k > data.k_max:
        raise ValueError("prior truncation exceeds the observed coordinates")
    s2 = prior.variances
    shrink = data.n * s2 / (1 + data.n * s2)
    return CoordinatePosterior(data.x[: prior.k] * shrink, s2 / (1 + data.n * s2))


def kl_whitenoise(theta0, theta, n: float) -> tuple[float, float]:
    """Kullback-Leibler divergence and log-ratio variance of the n-experiments."""
    a = np.asarray(theta0, dtype=float)
    b = np.asarray(theta, dtype=float)
    size = max(a.size, b.size)
    d = np.zeros(size)
    d[: a.size] += a
    d[: b.size] -= b
    sq = float(np.dot(d, d))
    return 0.5 * n * sq, n * sq


def loglik_ratio(x: np.ndarray, theta0, theta, n: float) -> np.ndarray:
    """log dP_theta0 / dP_theta evaluated at observation rows ``x``."""
    a = np.asarray(theta0, float)
    b = np.asarray(theta, float)
    return n * (x @ (a - b)) - 0.5 * n * (a @ a - b @ b)


def posterior_distance_draws(data: WhiteNoiseData, prior: SequencePrior, theta0,
                             draws: int, seed) -> np.ndarray:
    """Posterior draws of ||theta - theta0||, including the fixed tail beyond k."""
    rng = make_rng(seed)
    post = posterior(data, prior)
    th0 = _coords(theta0, data.k_max)
    fixed = float(np.sum(th0[prior.k:] ** 2)) + _tail(theta0, data.k_max)
    out = np.empty(draws)
    chunk = max(1, 4_000_000 // prior.k)
    for start in range(0, draws, chunk):
        m = min(chunk, draws - start)
        th = post.mean + np.sqrt(post.variance) * rng.standard_normal((m, prior.k))
        diff = th - th0[: prior.k]
        out[start:start + m] = np.sqrt(np.einsum("ij,ij->i", diff, diff) + fixed)
    return out


def posterior_mass_outside(data, prior, theta0, r: float, draws: int = 4000, seed=None) -> float:
    """Posterior probability of {||theta - theta0|| >= r}."""
    if draws < 1000:
        raise ValueError("use at least 1000 draws")
    return float(np.mean(posterior_distance_draws(data, prior, theta0, draws, seed) >= r))


def contraction_radius(data, prior, theta0, q: float = 0.9, draws: int = 4000, seed=None) -> float:
    """q-quantile of the posterior distance to theta0."""
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    return float(np.quantile(posterior_distance_draws(data, prior, theta0, draws, seed), q))


def default_truncation(n: float, alpha: float) -> int:
    """k = floor(n^(1/(2 alpha + 1)))."""
    return max(1, int(math.floor(n ** (1 / (2 * alpha + 1)) + 1e-9)))
