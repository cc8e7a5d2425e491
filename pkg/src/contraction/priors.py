"""Prior samplers and a Monte Carlo small-ball probability estimator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats

from .seeding import make_rng

__all__ = [
    "SequencePrior",
    "HistogramPrior",
    "StepFunction",
    "StickBreakingDP",
    "DiscreteCdf",
    "BernsteinDirichletPrior",
    "BernsteinDensity",
    "PriorConfigurationError",
    "SmallBallEstimate",
    "sample_sequence_prior",
    "variance_decay_ratio",
    "sample_histogram",
    "sample_dp_cdf",
    "sample_dp_values",
    "sample_bernstein_density",
    "sample_bernstein_batch",
    "bernstein_values",
    "small_ball_estimate",
]


class PriorConfigurationError(RuntimeError):
    """Raised when a restricted prior cannot be sampled efficiently."""


# -- Gaussian sequence prior ----------------------------------------------------

@dataclass
class SequencePrior:
    """Independent centered normal coordinates truncated at ``k``.

    Attributes
    ----------
    k : int
        Number of random coordinates; the rest are zero.
    variances : ndarray
        Prior variance of each of the k coordinates.
    alpha : float
        Smoothness level the variances are meant to match.
    """

    k: int
    variances: np.ndarray
    alpha: float = 0.0

    def __post_init__(self):
        self.variances = np.asarray(self.variances, dtype=float)
        if self.k < 1 or self.variances.shape != (self.k,):
            raise ValueError("need k >= 1 and one variance per coordinate")
        if np.any(self.variances <= 0):
            raise ValueError("prior variances must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")

    @classmethod
    def flat(cls, k: int, alpha: float = 0.0) -> "SequencePrior":
        """All variances equal to 1/k."""
        return cls(k, np.full(k, 1.0 / k), alpha)

    @classmethod
    def power(cls, k: int, alpha: float) -> "SequencePrior":
        """Variances i^-(2 alpha + 1)."""
        i = np.arange(1, k + 1, dtype=float)
        return cls(k, i ** -(2 * alpha + 1), alpha)


def sample_sequence_prior(prior: SequencePrior, rng_seed, size=None) -> np.ndarray:
    """Draw theta_1..theta_k; shape (k,) or (size, k)."""
    rng = make_rng(rng_seed)
    shape = (prior.k,) if size is None else (size, prior.k)
    return rng.standard_normal(shape) * np.sqrt(prior.variances)


def variance_decay_ratio(prior: SequencePrior) -> float:
    """k * min_i variance_i * i^(2 alpha).

    Stays in a fixed band [c, C] as k grows exactly when the smallest scaled
    prior variance behaves like 1/k.
    """
    i = np.arange(1, prior.k + 1, dtype=float)
    return float(prior.k * np.min(prior.variances * i ** (2 * prior.alpha)))


# -- random histograms ------------------------------------------------------------

@dataclass
class HistogramPrior:
    """Uniform[-M, M] heights on a regular K-cell partition of [-A, A]."""

    K: int
    M: float
    A: float

    def __post_init__(self):
        if self.K < 1 or self.M <= 0 or self.A <= 0:
            raise ValueError("need K >= 1, M > 0 and A > 0")

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(-self.A, self.A, self.K + 1)

    def cell_of(self, x) -> np.ndarray:
        """Cell index 0..K-1 of each point, or -1 outside [-A, A]."""
        x = np.asarray(x, dtype=float)
        idx = np.floor((x + self.A) / (2 * self.A) * self.K).astype(int)
        idx = np.where(x == self.A, self.K - 1, idx)
        return np.where((x < -self.A) | (x > self.A), -1, idx)


@dataclass
class StepFunction:
    """Piecewise-constant function on a regular partition, zero outside it."""

    edges: np.ndarray
    heights: np.ndarray

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        K = self.heights.size
        A0, A1 = self.edges[0], self.edges[-1]
        idx = np.clip(np.floor((x - A0) / (A1 - A0) * K).astype(int), 0, K - 1)
        inside = (x >= A0) & (x <= A1)
        return np.where(inside, self.heights[idx], 0.0)


def sample_histogram(prior: HistogramPrior, rng_seed) -> StepFunction:
    rng = make_rng(rng_seed)
    return StepFunction(prior.edges, rng.uniform(-prior.M, prior.M, prior.K))


# -- Dirichlet process via stick breaking ---------------------------------------

_BASES = {"normal": stats.norm, "logistic": stats.logistic}


@dataclass
class StickBreakingDP:
    """Dirichlet process with base cdf ``base((t - location)/scale)``.

    ``location_range`` / ``scale_range``, when given, put independent uniform
    hyperpriors on the location and scale; the fixed values are then ignored.
    The default truncation keeps the expected leftover stick below 1e-9.
    """

    mass: float
    location: float = 0.0
    scale: float = 1.0
    base: str = "normal"
    truncation: Optional[int] = None
    location_range: Optional[tuple] = None
    scale_range: Optional[tuple] = None

    def __post_init__(self):
        if self.mass <= 0 or self.scale <= 0:
            raise ValueError("mass and scale must be positive")
        if self.base not in _BASES:
            raise ValueError(f"unknown base shape {self.base!r}")
        if self.scale_range is not None and min(self.scale_range) <= 0:
            raise ValueError("scale hyperprior must live on positive values")
        if self.truncation is None:
            per_break = math.log1p(1.0 / self.mass)
            self.truncation = max(math.ceil(40 * self.mass), math.ceil(9 * math.log(10) / per_break))

    @property
    def expected_residual(self) -> float:
        return (self.mass / (1 + self.mass)) ** self.truncation

    def base_cdf(self, t, location=None, scale=None):
        loc = self.location if location is None else location
        sc = self.scale if scale is None else scale
        return _BASES[self.base].cdf((np.asarray(t, float) - loc) / sc)


@dataclass
class DiscreteCdf:
    """Right-continuous step cdf of a finite weighted atom set."""

    atoms: np.ndarray
    weights: np.ndarray
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        order = np.argsort(self.atoms, kind="stable")
        self.atoms = np.asarray(self.atoms, float)[order]
        self.weights = np.asarray(self.weights, float)[order]
        self._cum = np.cumsum(self.weights)

    @property
    def total_mass(self) -> float:
        return float(self._cum[-1])

    def __call__(self, t):
        idx = np.searchsorted(self.atoms, np.asarray(t, float), side="right")
        return np.where(idx > 0, self._cum[np.maximum(idx - 1, 0)], 0.0)


def _stick_weights(rng, mass, T, size):
    v = rng.beta(1.0, mass, (size, T))
    log_rest = np.concatenate([np.zeros((size, 1)), np.cumsum(np.log1p(-v), axis=1)[:, :-1]], axis=1)
    return v * np.exp(log_rest)


def _base_atoms(rng, prior: StickBreakingDP, size):
    T = prior.truncation
    loc = np.full((size, 1), prior.location)
    sc = np.full((size, 1), prior.scale)
    if prior.location_range is not None:
        loc = rng.uniform(*prior.location_range, (size, 1))
    if prior.scale_range is not None:
        sc = rng.uniform(*prior.scale_range, (size, 1))
    u = rng.random((size, T))
    return loc + sc * _BASES[prior.base].ppf(u)


def sample_dp_cdf(prior: StickBreakingDP, rng_seed) -> DiscreteCdf:
    rng = make_rng(rng_seed)
    w = _stick_weights(rng, prior.mass, prior.truncation, 1)[0]
    atoms = _base_atoms(rng, prior, 1)[0]
    return DiscreteCdf(atoms, w)


def sample_dp_values(prior: StickBreakingDP, rng_seed, size: int, at) -> np.ndarray:
    """Values H_s(t) of ``size`` independent DP cdfs at the points ``at``.

    Returns an array of shape (size, len(at)); draws are produced in chunks
    so memory stays bounded.
    """
    rng = make_rng(rng_seed)
    at = np.asarray(at, dtype=float)
    T = prior.truncation
    out = np.empty((size, at.size))
    chunk = 1024
    for start in range(0, size, chunk):
        m = min(chunk, size - start)
        w = _stick_weights(rng, prior.mass, T, m)
        atoms = _base_atoms(rng, prior, m)
        order = np.argsort(atoms, axis=1)
        atoms = np.take_along_axis(atoms, order, axis=1)
        cum = np.cumsum(np.take_along_axis(w, order, axis=1), axis=1)
        # one sorted key array for the whole chunk: row index + a monotone map into (0, 1)
        rows = np.arange(m)[:, None]
        keys = (rows + 0.5 + np.arctan(atoms) / np.pi).ravel()
        queries = rows + 0.5 + np.arctan(at)[None, :] / np.pi
        count = np.searchsorted(keys, queries.ravel(), side="right").reshape(m, at.size) - rows * T
        padded = np.concatenate([np.zeros((m, 1)), cum], axis=1)
        out[start:start + m] = np.minimum(np.take_along_axis(padded, count, axis=1), 1.0)
    return out


# -- Bernstein-Dirichlet prior ---------------------------------------------------

def bernstein_values(weights, x) -> np.ndarray:
    """Bernstein density sum_j w_j Beta(x; j, k-j+1) at the points x."""
    w = np.asarray(weights, dtype=float)
    k = w.size
    x = np.asarray(x, dtype=float)
    j = np.arange(k)
    return k * stats.binom.pmf(j[None, :], k - 1, x[:, None]) @ w


@dataclass
class BernsteinDensity:
    """f = tau * q with q a Bernstein density of order len(weights) on [0, 1]."""

    tau: float
    weights: np.ndarray

    @property
    def order(self) -> int:
        return int(np.asarray(self.weights).size)

    def density(self, x):
        return bernstein_values(self.weights, x)

    def __call__(self, x):
        return self.tau * self.density(x)


@dataclass
class BernsteinDirichletPrior:
    """Random f = tau * q restricted to {m < f < M}.

    The order k has pmf proportional to exp(-beta2 k) on 1..k_max; given k,
    the weights are Dirichlet(dirichlet_alpha, ..., dirichlet_alpha) and tau
    is uniform on ``tau_range`` (default [1.1 m, 0.9 M]).
    """

    m: float
    M: float
    beta2: float = 1.0
    beta1: float = 2.0
    k_max: int = 30
    dirichlet_alpha: float = 1.0
    tau_range: Optional[tuple] = None
    check_points: int = 512
    max_rejections: int = 10_000

    def __post_init__(self):
        if not 0 < self.m < self.M:
            raise ValueError("need 0 < m < M")
        if self.tau_range is None:
            self.tau_range = (1.1 * self.m, 0.9 * self.M)
        lo, hi = self.tau_range
        if not 0 < lo <= hi:
            raise ValueError("tau range must be a positive interval")

    def order_pmf(self) -> np.ndarray:
        k = np.arange(1, self.k_max + 1)
        p = np.exp(-self.beta2 * (k - 1))
        return p / p.sum()

    def order_bounds_hold(self) -> bool:
        """exp(-beta1 k log k) <= rho(k) <= exp(-beta2 (k-1)) on 1..k_max."""
        k = np.arange(1, self.k_max + 1)
        rho = self.order_pmf()
        return bool(np.all(rho >= rho[0] * np.exp(-self.beta1 * k * np.log(k)))
                    and np.all(rho <= np.exp(-self.beta2 * (k - 1)) + 1e-15))

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.check_points)


def _propose(prior: BernsteinDirichletPrior, rng, size):
    k = rng.choice(np.arange(1, prior.k_max + 1), size=size, p=prior.order_pmf())
    tau = rng.uniform(*prior.tau_range, size)
    weights = [rng.dirichlet(np.full(kk, prior.dirichlet_alpha)) for kk in k]
    return k, tau, weights


def sample_bernstein_density(prior: BernsteinDirichletPrior, rng_seed) -> BernsteinDensity:
    """One draw from the restricted prior by rejection."""
    rng = make_rng(rng_seed)
    grid = prior.grid
    for attempt in range(1, prior.max_rejections + 2):
        k, tau, weights = _propose(prior, rng, 1)
        f = tau[0] * bernstein_values(weights[0], grid)
        if np.all(f > prior.m) and np.all(f < prior.M):
            return BernsteinDensity(float(tau[0]), weights[0])
    raise PriorConfigurationError(
        f"no admissible draw in {prior.max_rejections} proposals (acceptance rate < {1 / prior.max_rejections:.1e})")


def sample_bernstein_batch(prior: BernsteinDirichletPrior, rng_seed, size: int, at) -> tuple:
    """``size`` restricted-prior draws evaluated at the points ``at``.

    Returns (values, orders, taus) with values of shape (size, len(at)).
    Raises ``PriorConfigurationError`` when the running acceptance rate
    would need more than ``max_rejections`` proposals per accepted draw.
    """
    rng = make_rng(rng_seed)
    at = np.asarray(at, dtype=float)
    grid = prior.grid
    # basis matrices per order, cached
    basis_grid = {}
    basis_at = {}
    vals, orders, taus = [], [], []
    proposed = accepted = 0
    while accepted < size:
        batch = max(64, int(1.3 * (size - accepted) * (proposed + 1) / (accepted + 1)))
        batch = min(batch, 200_000)
        k, tau, weights = _propose(prior, rng, batch)
        proposed += batch
        for kk, t, w in zip(k, tau, weights):
            if kk not in basis_grid:
                j = np.arange(kk)
                basis_grid[kk] = kk * stats.binom.pmf(j[None, :], kk - 1, grid[:, None])
                basis_at[kk] = kk * stats.binom.pmf(j[None, :], kk - 1, at[:, None])
            f = t * (basis_grid[kk] @ w)
            if np.all(f > prior.m) and np.all(f < prior.M):
                vals.append(t * (basis_at[kk] @ w))
                orders.append(kk)
                taus.append(t)
                accepted += 1
                if accepted == size:
                    break
        if proposed > prior.max_rejections * (accepted + 1):
            raise PriorConfigurationError(
                f"acceptance rate {accepted / proposed:.2e} too low for the restricted prior")
    return np.array(vals).reshape(size, at.size), np.array(orders), np.array(taus)


# -- small-ball probabilities ------------------------------------------------------

@dataclass
class SmallBallEstimate:
    estimate: float
    standard_error: float
    hits: int
    draws: int
    upper_bound: float

    @property
    def upper_only(self) -> bool:
        return self.hits == 0


def small_ball_estimate(sampler: Callable, center, radius: float, norm: str = "sup",
                        draws: int = 10_000, rng_seed=None, weights=None) -> SmallBallEstimate:
    """Monte Carlo prior mass of the open ball {f : ||f - center|| < radius}.

    ``sampler(rng, size)`` must return function values on a fixed grid,
    shape (size, G); ``center`` holds the values of the centre on the same
    grid.  ``weights`` are the quadrature weights of the L2 norm (uniform by
    default).  With no hits only the one-sided 95% bound 3/draws is
    informative; the estimate is then 0.
    """
    if draws < 1000:
        raise ValueError("use at least 1000 draws")
    if norm not in ("sup", "L2"):
        raise ValueError("norm must be 'sup' or 'L2'")
    rng = make_rng(rng_seed)
    center = np.asarray(center, dtype=float)
    hits = 0
    chunk = 10_000
    for start in range(0, draws, chunk):
        m = min(chunk, draws - start)
        diff = np.asarray(sampler(rng, m), dtype=float) - center
        if norm == "sup":
            dist = np.max(np.abs(diff), axis=1)
        else:
            w = np.full(center.size, 1.0 / center.size) if weights is None else np.asarray(weights, float)
            dist = np.sqrt((diff * diff) @ w)
        hits += int(np.count_nonzero(dist < radius))
    p = hits / draws
    se = math.sqrt(p * (1 - p) / draws)
    upper = 3.0 / draws if hits == 0 else min(1.0, p + 2 * se)
    return SmallBallEstimate(p, se, hits, draws, upper)
