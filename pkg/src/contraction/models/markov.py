"""Nonlinear autoregression X_i = f(X_{i-1}) + e_i with a random-histogram prior.

The likelihood is taken conditionally on X_0.  Under a histogram prior with
independent Uniform[-M, M] heights the posterior factorises over cells: the
height of cell k is N(s_k/m_k, 1/m_k) truncated to [-M, M], where m_k counts
visits of X_{i-1} to the cell and s_k sums the following responses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from ..priors import HistogramPrior, StepFunction
from ..seeding import make_rng


def envelope(y, M: float):
    """r(y) = (phi(y - M) + phi(y + M)) / 2."""
    y = np.asarray(y, dtype=float)
    return 0.5 * (stats.norm.pdf(y - M) + stats.norm.pdf(y + M))


@dataclass
class AutoregressionModel:
    f: Callable
    M: float
    L: float = float("inf")

    def check(self, lo=-10.0, hi=10.0, points=20001) -> tuple[float, float]:
        """Observed sup|f| and largest difference quotient on a grid."""
        x = np.linspace(lo, hi, points)
        v = self.f(x)
        lip = float(np.max(np.abs(np.diff(v)) / np.diff(x)))
        sup = float(np.max(np.abs(v)))
        if sup > self.M * (1 + 1e-12):
            raise ValueError(f"sup|f| = {sup} exceeds M = {self.M}")
        if lip > self.L * (1 + 1e-6):
            raise ValueError(f"Lipschitz quotient {lip} exceeds L = {self.L}")
        return sup, lip


@dataclass
class ChainData:
    states: np.ndarray
    burn_in: int
    seed: object = None

    @property
    def n(self) -> int:
        return self.states.size - 1


def simulate_chain(model: AutoregressionModel, n: int, burn_in: int = 1000, seed=None) -> ChainData:
    """States X_0..X_n, with X_0 taken after ``burn_in`` steps from 0."""
    if burn_in < 1000:
        raise ValueError("burn-in must be at least 1000 steps")
    rng = make_rng(seed)
    noise = rng.standard_normal(burn_in + n)
    f = model.f
    x = 0.0
    for e in noise[:burn_in]:
        x = float(f(x)) + e
    out = np.empty(n + 1)
    out[0] = x
    for i in range(n):
        x = float(f(x)) + noise[burn_in + i]
        out[i + 1] = x
    return ChainData(out, burn_in, seed)


def parallel_chains(f, chains: int, steps: int, burn_in: int, rng) -> np.ndarray:
    """Run independent chains side by side; returns shape (steps + 1, chains)."""
    x = np.zeros(chains)
    for _ in range(burn_in):
        x = f(x) + rng.standard_normal(chains)
    out = np.empty((steps + 1, chains))
    out[0] = x
    for i in range(steps):
        x = f(x) + rng.standard_normal(chains)
        out[i + 1] = x
    return out


def stationary_sample(model: AutoregressionModel, size: int = 10**6, chains: int = 1000,
                      burn_in: int = 1000, seed=None) -> np.ndarray:
    rng = make_rng(seed)
    steps = max(1, size // chains)
    return parallel_chains(model.f, chains, steps - 1, burn_in, rng).ravel()


def stationary_density(model: AutoregressionModel, bins: np.ndarray, size: int = 10**6, seed=None):
    """Histogram estimate of the stationary density on the given bin edges."""
    sample = stationary_sample(model, size, seed=seed)
    counts, _ = np.histogram(sample, bins)
    return counts / (sample.size * np.diff(bins))


def envelope_sandwich(model: AutoregressionModel, bins: int = 40, size: int = 10**6, seed=None) -> tuple[float, float]:
    """Constants (c, C) with c r <= q_hat <= C r over [-4 - M, 4 + M]."""
    edges = np.linspace(-4 - model.M, 4 + model.M, bins + 1)
    q_hat = stationary_density(model, edges, size, seed)
    ratio = q_hat / envelope(0.5 * (edges[1:] + edges[:-1]), model.M)
    return float(ratio.min()), float(ratio.max())


def _quad_grid(M: float, points: int = 200_001):
    x = np.linspace(-M - 14, M + 14, points)
    w = np.full(points, x[1] - x[0])
    w[[0, -1]] *= 0.5
    return x, w


def transition_distance(f1, f2, M: float) -> float:
    """Hellinger-type distance between transition kernels, integrated against r.

    d^2 = int 2 (1 - exp(-(f1 - f2)^2 / 8)) r dx.
    """
    x, w = _quad_grid(M)
    diff = f1(x) - f2(x)
    return float(math.sqrt(np.sum(w * 2 * -np.expm1(-diff * diff / 8) * envelope(x, M))))


def l2r_distance(f1, f2, M: float) -> float:
    """||f1 - f2|| in L2(r)."""
    x, w = _quad_grid(M)
    diff = f1(x) - f2(x)
    return float(math.sqrt(np.sum(w * diff * diff * envelope(x, M))))


# -- posterior ------------------------------------------------------------------

@dataclass
class HistogramPosterior:
    """Independent truncated-normal (or uniform) cell heights."""

    prior: HistogramPrior
    visits: np.ndarray
    sums: np.ndarray

    def _params(self):
        m = self.visits
        seen = m > 0
        loc = np.where(seen, self.sums / np.maximum(m, 1), 0.0)
        scale = np.where(seen, 1 / np.sqrt(np.maximum(m, 1)), np.inf)
        return seen, loc, scale

    def sample(self, rng_seed, size: int) -> np.ndarray:
        """Height draws, shape (size, K), by inverse cdf on the truncation interval."""
        rng = make_rng(rng_seed)
        M = self.prior.M
        seen, loc, scale = self._params()
        u = rng.random((size, self.prior.K))
        out = -M + 2 * M * u
        if seen.any():
            a = (-M - loc[seen]) / scale[seen]
            b = (M - loc[seen]) / scale[seen]
            out[:, seen] = stats.truncnorm.ppf(u[:, seen], a, b, loc=loc[seen], scale=scale[seen])
        return out

    def mean(self) -> np.ndarray:
        M = self.prior.M
        seen, loc, scale = self._params()
        out = np.zeros(self.prior.K)
        if seen.any():
            a = (-M - loc[seen]) / scale[seen]
            b = (M - loc[seen]) / scale[seen]
            out[seen] = stats.truncnorm.mean(a, b, loc=loc[seen], scale=scale[seen])
        return out


def histogram_posterior(data: ChainData, prior: HistogramPrior) -> HistogramPosterior:
    prev, resp = data.states[:-1], data.states[1:]
    cell = prior.cell_of(prev)
    inside = cell >= 0
    visits = np.bincount(cell[inside], minlength=prior.K).astype(float)
    sums = np.bincount(cell[inside], weights=resp[inside], minlength=prior.K)
    return HistogramPosterior(prior, visits, sums)


def _cell_integrals(prior: HistogramPrior, f0, M: float):
    """Per-cell integrals of r, f0 r, f0^2 r, and the exterior integral of f0^2 r."""
    x, w = _quad_grid(M)
    r = envelope(x, M)
    v = f0(x)
    cell = prior.cell_of(x)
    inside = cell >= 0
    R = np.bincount(cell[inside], weights=(w * r)[inside], minlength=prior.K)
    F = np.bincount(cell[inside], weights=(w * r * v)[inside], minlength=prior.K)
    G = np.bincount(cell[inside], weights=(w * r * v * v)[inside], minlength=prior.K)
    outside = float(np.sum((w * r * v * v)[~inside]))
    return R, F, G, outside


def posterior_distance_draws(data: ChainData, prior: HistogramPrior, f0, M: float, draws: int, seed) -> np.ndarray:
    """Posterior draws of ||f_alpha - f0|| in L2(r), exterior cell included."""
    post = histogram_posterior(data, prior)
    heights = post.sample(seed, draws)
    R, F, G, outside = _cell_integrals(prior, f0, M)
    d2 = heights**2 @ R - 2 * heights @ F + G.sum() + outside
    return np.sqrt(np.maximum(d2, 0.0))


def contraction_radius(data, prior, f0, M: float, q: float = 0.9, draws: int = 4000, seed=None) -> float:
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    return float(np.quantile(posterior_distance_draws(data, prior, f0, M, draws, seed), q))


def posterior_mass_outside(data, prior, f0, M: float, r: float, draws: int = 4000, seed=None) -> float:
    return float(np.mean(posterior_distance_draws(data, prior, f0, M, draws, seed) >= r))


def approximation_floor(prior: HistogramPrior, f0, M: float) -> float:
    """Smallest L2(r) distance from f0 to a histogram on the prior's partition."""
    R, F, G, outside = _cell_integrals(prior, f0, M)
    best = np.clip(np.where(R > 0, F / np.where(R > 0, R, 1), 0.0), -prior.M, prior.M)
    return float(math.sqrt(max(0.0, best**2 @ R - 2 * best @ F + G.sum() + outside)))


# -- log-likelihood ratio moments -------------------------------------------------

@dataclass
class MomentEstimate:
    mean: float
    mean_se: float
    variance: float
    variance_se: float
    replicates: int


def loglik_ratio_moments(f0, f, n: int, replicates: int = 1000, seed=None, burn_in: int = 1000) -> MomentEstimate:
    """Monte Carlo mean and variance of log(p_f0 / p_f) over n transitions given X_0."""
    if replicates < 100:
        raise ValueError("use at least 100 replicates")
    rng = make_rng(seed)
    x = np.zeros(replicates)
    for _ in range(burn_in):
        x = f0(x) + rng.standard_normal(replicates)
    total = np.zeros(replicates)
    for _ in range(n):
        m0, m1 = f0(x), f(x)
        y = m0 + rng.standard_normal(replicates)
        total += 0.5 * ((y - m1) ** 2 - (y - m0) ** 2)
        x = y
    mean = float(total.mean())
    var = float(total.var(ddof=1))
    sq = (total - mean) ** 2
    return MomentEstimate(mean, float(total.std(ddof=1) / math.sqrt(replicates)), var,
                          float(sq.std(ddof=1) / math.sqrt(replicates)), replicates)


def per_step_kl(f0, f, stationary: np.ndarray) -> float:
    """1/2 E[(f0 - f)^2(X)] with X drawn from a stationary sample."""
    d = f0(stationary) - f(stationary)
    return 0.5 * float(np.mean(d * d))


# -- configuration helpers -----------------------------------------------------------

def rate(n: float) -> float:
    """n^(-1/3) (log n)^(1/2)."""
    return n ** (-1 / 3) * math.sqrt(math.log(n))


def scaled_partition(n: float, M: float, k_scale: float = 3.0, a_scale: float = 3.0) -> HistogramPrior:
    """Histogram prior with K ~ sqrt(log(1/eps)) / eps and A ~ sqrt(log(1/eps))."""
    eps = rate(n)
    lg = math.sqrt(math.log(1 / eps))
    K = max(1, math.ceil(k_scale * lg / eps))
    A = a_scale * lg
    return HistogramPrior(K, M, A)


def tanh_scaled(M: float, slope: float = 1.0):
    return lambda x: 0.8 * M * np.tanh(slope * np.asarray(x, float))


F0_REGISTRY = {
    "zero": lambda M: (lambda x: np.zeros_like(np.asarray(x, float))),
    "tanh-scaled": lambda M: tanh_scaled(M),
    "histogram": lambda M: StepFunction(np.linspace(-2, 2, 5), 0.6 * M * np.array([-1.0, -0.3, 0.4, 1.0])),
}
