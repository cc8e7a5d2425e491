"""Independent, non-identically distributed experiments.

Three models live here: Poisson counts with a monotone link and a uniform
prior on a finite bracketing sieve, binary responses with a Dirichlet-process
link, and one-dimensional parametric families handled on a grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import special, stats

from ..covering import PoissonSieve, poisson_bracketing
from ..divergences import bernoulli_hellinger_sq, poisson_hellinger_sq
from ..priors import StickBreakingDP, sample_dp_values
from ..seeding import make_rng


class GridTooSmall(ValueError):
    """Posterior mass piles up at the edge of the parameter grid."""


# -- Poisson counts with a monotone link ------------------------------------------

def poisson_generalized_hellinger(lam1: float, mu1: float, lam2: float, mu2: float) -> float:
    """Squared Hellinger distance between the mass functions e^-lam mu^x / x!.

    Equals (e^{(m1-l1)/2} - e^{(m2-l2)/2})^2
    + 2 e^{-(l1+l2)/2} (e^{(m1+m2)/2} - e^{sqrt(m1 m2)}).
    """
    a = math.exp((mu1 - lam1) / 2) - math.exp((mu2 - lam2) / 2)
    cross = 2 * math.exp(-(lam1 + lam2) / 2 + math.sqrt(mu1 * mu2))
    cross *= math.expm1((mu1 + mu2) / 2 - math.sqrt(mu1 * mu2))
    return a * a + cross


def generalized_hellinger_bound(lam1, mu1, lam2, mu2, L: float, U: float) -> float:
    """Lipschitz-type bound (1/2 + 1/(4L)) e^{U-L} (|dl|^2 + |dmu|^2)."""
    return (0.5 + 0.25 / L) * math.exp(U - L) * ((lam1 - lam2) ** 2 + (mu1 - mu2) ** 2)


@dataclass
class PoissonCountData:
    covariates: np.ndarray
    counts: np.ndarray
    seed: object = None

    @property
    def n(self) -> int:
        return self.counts.size


def simulate_counts(link: Callable, covariates, seed=None) -> PoissonCountData:
    z = np.asarray(covariates, dtype=float)
    rng = make_rng(seed)
    counts = rng.poisson(link(z)).astype(np.int64)
    return PoissonCountData(z, np.minimum(counts, 10**6), seed)


def sieve_posterior(links, counts) -> np.ndarray:
    """Exact posterior weights over an explicit list of mean vectors.

    ``links`` has one row per sieve element holding the Poisson means at the
    covariates; the prior is uniform over rows.
    """
    mu = np.atleast_2d(np.asarray(links, dtype=float))
    x = np.asarray(counts)
    if np.any(x < 0) or np.any(x != np.floor(x)):
        raise ValueError("counts must be nonnegative integers")
    if np.any(mu <= 0):
        raise ValueError("Poisson means must be positive")
    return normalize_log_weights(stats.poisson.logpmf(x[None, :], mu).sum(axis=1))


def normalize_log_weights(loglik) -> np.ndarray:
    """exp(loglik) scaled to sum to one, computed without overflow."""
    loglik = np.asarray(loglik, dtype=float)
    if not np.isfinite(loglik).any():
        raise ValueError("every element has zero likelihood")
    return np.exp(loglik - special.logsumexp(loglik))


@dataclass
class SievePosterior:
    """Posterior over a bracketing sieve, held as exact tree tables."""

    sieve: PoissonSieve
    data: PoissonCountData
    _tables: list = field(repr=False)
    _leaf_logw: Callable = field(repr=False)

    @property
    def log_evidence(self) -> float:
        """log of (sum over elements of the likelihood) minus log N, up to the x! term."""
        return float(special.logsumexp(self._tables[0][0])) - self.sieve.log_count

    def sample_distances(self, truth: Callable, draws: int, seed=None) -> np.ndarray:
        """Draws of d_n(element, truth), the root mean per-covariate Hellinger^2."""
        sieve = self.sieve
        atoms = sieve.atoms
        weight = np.bincount(sieve.atom_of_covariate, minlength=atoms.size)
        mu0 = truth(atoms)
        levels = sieve.level_links()
        h2 = poisson_hellinger_sq(levels[None, :], mu0[:, None]) * weight[:, None]
        cum = np.concatenate([np.zeros((1, levels.size)), np.cumsum(h2, axis=0)])
        br = sieve.brackets

        def leaf_stat(v):
            return cum[br.hi[v]] - cum[br.lo[v]]

        total, _ = br.sample(self._tables, self._leaf_logw, make_rng(seed), draws, leaf_stat)
        return np.sqrt(np.maximum(total, 0.0) / self.data.n)


def structured_sieve_posterior(sieve: PoissonSieve, data: PoissonCountData) -> SievePosterior:
    """Posterior for the uniform prior on ``sieve``, without enumerating it."""
    x = np.asarray(data.counts)
    if np.any(x < 0):
        raise ValueError("counts must be nonnegative integers")
    atoms = sieve.atoms.size
    S = np.concatenate([[0.0], np.cumsum(np.bincount(sieve.atom_of_covariate, weights=x, minlength=atoms))])
    N = np.concatenate([[0.0], np.cumsum(np.bincount(sieve.atom_of_covariate, minlength=atoms))])
    log_mu = np.log(sieve.level_links())
    mu = sieve.level_links()
    br = sieve.brackets

    # log-likelihood of node v as one leaf at exit level c, x! terms dropped
    def leaf_logw(v):
        return (S[br.hi[v]] - S[br.lo[v]]) * log_mu - (N[br.hi[v]] - N[br.lo[v]]) * mu

    tables = br.log_partition(leaf_logw)
    return SievePosterior(sieve, data, tables, leaf_logw)


@dataclass
class PoissonSieveModel:
    """Monotone-link Poisson regression with a sieve mesh proportional to n^(-1/3)."""

    truth: Callable
    L: float = 1.0
    U: float = 3.0
    mesh_scale: float = 2.0
    level_ratio: Optional[float] = 1.5
    rate_scale: float = 0.085

    def mesh(self, n: int) -> float:
        return self.mesh_scale * n ** (-1 / 3)

    def rate(self, n: int) -> float:
        """eps_n = rate_scale * n^(-1/3), in the d_n metric."""
        return self.rate_scale * n ** (-1 / 3)

    def sieve(self, n: int) -> PoissonSieve:
        return poisson_bracketing(self.mesh(n), self.L, self.U, uniform_covariates(n), self.level_ratio)


def uniform_covariates(n: int, a: float = 0.0, b: float = 1.0) -> np.ndarray:
    """The design a + (b - a) i/n, i = 1..n."""
    return a + (b - a) * np.arange(1, n + 1) / n


# -- binary responses --------------------------------------------------------------

def hellinger_bernoulli(p, q):
    """(sqrt p - sqrt q)^2 + (sqrt(1-p) - sqrt(1-q))^2."""
    out = bernoulli_hellinger_sq(p, q)
    return float(out) if out.ndim == 0 else out


def default_binary_link(z):
    """Logistic cdf centred at 1/2 with scale 1/4: strictly inside (0, 1) on [0, 1]."""
    return special.expit((np.asarray(z, float) - 0.5) / 0.25)


def default_link_prior() -> StickBreakingDP:
    return StickBreakingDP(mass=1.0, base="logistic", location_range=(0.0, 1.0), scale_range=(0.1, 0.5))


@dataclass
class BinaryModel:
    link: Callable = default_binary_link
    prior: StickBreakingDP = field(default_factory=default_link_prior)
    a: float = 0.0
    b: float = 1.0

    def check(self, grid: int = 1001):
        z = np.linspace(self.a, self.b, grid)
        h = self.link(z)
        if np.any(h <= 0) or np.any(h >= 1) or np.any(np.diff(h) < -1e-12):
            raise ValueError("true link must be nondecreasing with values in (0, 1)")


@dataclass
class BinaryData:
    covariates: np.ndarray
    responses: np.ndarray
    seed: object = None

    @property
    def n(self) -> int:
        return self.responses.size


def simulate_binary(model: BinaryModel, n: int, seed=None, covariates=None) -> BinaryData:
    z = uniform_covariates(n, model.a, model.b) if covariates is None else np.asarray(covariates, float)
    rng = make_rng(seed)
    return BinaryData(z, (rng.random(z.size) < model.link(z)).astype(np.int64), seed)


def read_covariates(path) -> np.ndarray:
    """One-column CSV with header ``z``."""
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "z":
            raise ValueError(f"expected header 'z', found {header!r}")
        return np.array([float(line) for line in fh if line.strip()])


@dataclass
class WeightedPosterior:
    """Self-normalised importance sample of link values at the distinct covariates."""

    atoms: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    ess: float
    reliable: bool

    def mean(self) -> np.ndarray:
        return self.weights @ self.values

    def mean_se(self) -> np.ndarray:
        """Delta-method standard error of the self-normalised mean."""
        centred = self.values - self.mean()
        return np.sqrt((self.weights**2) @ (centred**2))


MIN_ESS = 50.0


def importance_weights(values: np.ndarray, atom_of_obs: np.ndarray, responses: np.ndarray):
    """Normalised weights and effective sample size for Bernoulli data."""
    ones = np.bincount(atom_of_obs, weights=responses, minlength=values.shape[1])
    trials = np.bincount(atom_of_obs, minlength=values.shape[1])
    with np.errstate(divide="ignore"):
        logw = special.xlogy(ones, values).sum(axis=1) + special.xlog1py(trials - ones, -values).sum(axis=1)
    if not np.isfinite(logw).any():
        return np.full(values.shape[0], np.nan), 0.0
    w = np.exp(logw - logw.max())
    w /= w.sum()
    return w, float(1.0 / np.sum(w * w))


def binary_posterior_is(model: BinaryModel, data: BinaryData, draws: int = 10**4, seed=None,
                        link_sampler: Optional[Callable] = None) -> WeightedPosterior:
    """Posterior of the link by importance sampling from the prior.

    ``link_sampler(rng, size, at)`` may replace the Dirichlet-process prior;
    it must return link values of shape (size, len(at)).  The result is marked
    unreliable when the effective sample size drops below 50.
    """
    if draws < 10**4:
        raise ValueError("need at least 10^4 prior draws")
    if data.n > 500:
        raise ValueError("importance sampling from the prior is limited to n <= 500")
    atoms, inverse = np.unique(data.covariates, return_inverse=True)
    rng = make_rng(seed)
    if link_sampler is None:
        values = sample_dp_values(model.prior, rng, draws, atoms)
    else:
        values = np.asarray(link_sampler(rng, draws, atoms), dtype=float)
    w, ess = importance_weights(values, inverse, data.responses)
    return WeightedPosterior(atoms, values, w, ess, ess >= MIN_ESS)


def binary_distances(post: WeightedPosterior, data: BinaryData, truth: Callable) -> np.ndarray:
    """d_n(H_s, H0) for every importance draw."""
    atoms, inverse = np.unique(data.covariates, return_inverse=True)
    count = np.bincount(inverse, minlength=atoms.size)
    h2 = hellinger_bernoulli(post.values, truth(atoms)[None, :])
    return np.sqrt(h2 @ count / data.n)


def weighted_quantile(values, weights, q: float) -> float:
    order = np.argsort(values)
    cw = np.cumsum(np.asarray(weights)[order])
    return float(np.asarray(values)[order][min(np.searchsorted(cw, q * cw[-1]), len(cw) - 1)])


# -- one-dimensional parametric families ---------------------------------------------

FAMILIES = ("normal-location", "uniform-endpoint")


@dataclass
class ParametricModel:
    """Family on an interval of parameters with a prior density.

    ``normal-location`` takes N(theta, scale_i^2) observations with known
    scales; ``uniform-endpoint`` takes Uniform(0, theta).
    """

    family: str
    lo: float
    hi: float
    prior_density: Optional[Callable] = None
    scales: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if not self.lo < self.hi:
            raise ValueError("empty parameter interval")
        if self.family == "uniform-endpoint" and self.lo <= 0:
            raise ValueError("endpoint must be positive")

    def simulate(self, theta: float, n: int, seed=None) -> np.ndarray:
        rng = make_rng(seed)
        if self.family == "uniform-endpoint":
            return theta * rng.random(n)
        scale = 1.0 if self.scales is None else np.asarray(self.scales, float)[:n]
        return theta + scale * rng.standard_normal(n)

    def rate(self, n: int) -> float:
        return 1.0 / n if self.family == "uniform-endpoint" else 1.0 / math.sqrt(n)


@dataclass
class GridPosterior:
    grid: np.ndarray
    probs: np.ndarray

    def mean(self) -> float:
        return float(self.probs @ self.grid)

    def mode(self) -> float:
        return float(self.grid[np.argmax(self.probs)])

    def radius(self, center: float, q: float = 0.9) -> float:
        """Smallest grid distance r with posterior mass of |theta - center| <= r at least q."""
        return weighted_quantile(np.abs(self.grid - center), self.probs, q)


def grid_posterior(model: ParametricModel, data, mesh: float, boundary_tol: float = 1e-3) -> GridPosterior:
    """Posterior on the grid lo, lo + mesh, ..., hi."""
    x = np.asarray(data, dtype=float)
    grid = np.arange(model.lo, model.hi + 0.5 * mesh, mesh)
    if grid.size < 3:
        raise ValueError("mesh too coarse for the parameter interval")
    if model.family == "uniform-endpoint":
        with np.errstate(divide="ignore"):
            loglik = np.where(grid >= x.max(), -x.size * np.log(grid), -np.inf)
    else:
        scale = np.ones(x.size) if model.scales is None else np.asarray(model.scales, float)[:x.size]
        prec = 1 / scale**2
        centre = np.sum(prec * x) / prec.sum()
        loglik = -0.5 * prec.sum() * (grid - centre) ** 2
    if model.prior_density is not None:
        with np.errstate(divide="ignore"):
            loglik = loglik + np.log(model.prior_density(grid))
    if not np.isfinite(loglik).any():
        raise GridTooSmall("no grid point has positive posterior density")
    p = np.exp(loglik - loglik.max())
    p /= p.sum()
    edge = max(p[0], p[-1]) if model.family == "normal-location" else p[-1]
    if edge > boundary_tol:
        raise GridTooSmall(f"posterior mass {edge:.3g} at the grid boundary")
    return GridPosterior(grid, p)
