"""Hellinger, Kullback-Leibler and log-likelihood-ratio moment discrepancies.

All quantities follow the conventions

    h^2(f, g) = int (sqrt f - sqrt g)^2 dmu            (in [0, 2])
    K(f, g)   = int f log(f/g) dmu
    V_k(f, g) = int f |log(f/g)|^k dmu
    V_k0(f,g) = int f |log(f/g) - K(f, g)|^k dmu       (centered moment)

Closed forms are used where they exist; every quantity also has a numeric
route (trapezoid rule on a truncated grid, or direct series summation for
the discrete families) selected with ``method="numeric"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import special, stats

__all__ = [
    "Density",
    "ComponentPair",
    "IncompatibleDensities",
    "normal_location",
    "normal",
    "poisson",
    "bernoulli",
    "exponential",
    "grid",
    "hellinger_sq",
    "kl",
    "v_k",
    "v_k0",
    "avg_hellinger_dn",
    "neighborhood_check",
    "INFINITE",
]

INFINITE = math.inf

FAMILIES = ("normal-location", "normal", "poisson", "bernoulli", "exponential", "grid")

_NORMAL_HALF_WIDTH = 12.0
_NORMAL_POINTS = 20001
_POISSON_TAIL = 1e-14
_EXPONENTIAL_SPAN = 45.0
_EXPONENTIAL_POINTS = 400001
_GRID_TOL = 1e-6


class IncompatibleDensities(ValueError):
    """Raised when two densities do not live on the same sample space."""


@dataclass(frozen=True)
class Density:
    """A univariate density from a named family, or tabulated on a grid.

    ``params`` holds the family parameters: ``(mean,)`` for normal-location,
    ``(mean, variance)`` for normal, ``(lam,)`` for poisson, ``(p,)`` for
    bernoulli and ``(mean,)`` for exponential.  Grid densities carry
    ``abscissas`` and ``ordinates`` instead.
    """

    family: str
    params: tuple = ()
    abscissas: np.ndarray | None = field(default=None, repr=False, compare=False)
    ordinates: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == "normal" and self.params[1] <= 0:
            raise ValueError("normal variance must be positive")
        if self.family == "poisson" and not self.params[0] > 0:
            raise ValueError("poisson mean must be strictly positive")
        if self.family == "bernoulli" and not 0.0 <= self.params[0] <= 1.0:
            raise ValueError("bernoulli p must lie in [0, 1]")
        if self.family == "exponential" and not self.params[0] > 0:
            raise ValueError("exponential mean must be positive")
        if self.family == "grid":
            x = np.asarray(self.abscissas, dtype=float)
            y = np.asarray(self.ordinates, dtype=float)
            if x.ndim != 1 or x.shape != y.shape or x.size < 2:
                raise ValueError("grid abscissas and ordinates must be equal-length 1-d arrays")
            if np.any(np.diff(x) <= 0):
                raise ValueError("grid abscissas must be strictly increasing")
            if np.any(y < 0):
                raise ValueError("grid ordinates must be nonnegative")
            mass = np.trapezoid(y, x)
            if abs(mass - 1.0) > _GRID_TOL:
                raise ValueError(f"grid density integrates to {mass!r}, not 1")
            object.__setattr__(self, "abscissas", x)
            object.__setattr__(self, "ordinates", y)

    @property
    def kind(self) -> str:
        """Sample-space kind; the two normal families share one."""
        return "normal" if self.family.startswith("normal") else self.family

    @property
    def mean(self) -> float:
        if self.family == "grid":
            return float(np.trapezoid(self.abscissas * self.ordinates, self.abscissas))
        return float(self.params[0])

    @property
    def variance(self) -> float:
        if self.family == "normal-location":
            return 1.0
        if self.family == "normal":
            return float(self.params[1])
        if self.family == "poisson":
            return float(self.params[0])
        if self.family == "bernoulli":
            p = self.params[0]
            return float(p * (1 - p))
        if self.family == "exponential":
            return float(self.params[0]) ** 2
        m = self.mean
        return float(np.trapezoid((self.abscissas - m) ** 2 * self.ordinates, self.abscissas))

    def pdf(self, x):
        """Density (or mass function) evaluated at ``x``."""
        x = np.asarray(x, dtype=float)
        if self.kind == "normal":
            return stats.norm.pdf(x, self.mean, math.sqrt(self.variance))
        if self.family == "poisson":
            return stats.poisson.pmf(x, self.params[0])
        if self.family == "bernoulli":
            return stats.bernoulli.pmf(x, self.params[0])
        if self.family == "exponential":
            return stats.expon.pdf(x, scale=self.params[0])
        return np.interp(x, self.abscissas, self.ordinates, left=0.0, right=0.0)

    def sample(self, rng: np.random.Generator, size=None):
        if self.kind == "normal":
            return rng.normal(self.mean, math.sqrt(self.variance), size)
        if self.family == "poisson":
            return rng.poisson(self.params[0], size)
        if self.family == "bernoulli":
            return (rng.random(size) < self.params[0]).astype(float)
        if self.family == "exponential":
            return rng.exponential(self.params[0], size)
        cdf = np.concatenate([[0.0], np.cumsum(np.diff(self.abscissas) * 0.5 *
                                               (self.ordinates[1:] + self.ordinates[:-1]))])
        return np.interp(rng.random(size) * cdf[-1], cdf, self.abscissas)


class ComponentPair(NamedTuple):
    p: Density
    q: Density


def normal_location(mean: float) -> Density:
    return Density("normal-location", (float(mean),))


def normal(mean: float, variance: float) -> Density:
    return Density("normal", (float(mean), float(variance)))


def poisson(lam: float) -> Density:
    return Density("poisson", (float(lam),))


def bernoulli(p: float) -> Density:
    return Density("bernoulli", (float(p),))


def exponential(mean: float) -> Density:
    return Density("exponential", (float(mean),))


def grid(abscissas: Sequence[float], ordinates: Sequence[float]) -> Density:
    return Density("grid", (), np.asarray(abscissas, float), np.asarray(ordinates, float))


def _check_pair(p: Density, q: Density):
    if p.kind != q.kind:
        raise IncompatibleDensities(f"{p.family} and {q.family} live on different sample spaces")
    if p.kind == "grid" and not np.array_equal(p.abscissas, q.abscissas):
        raise IncompatibleDensities("grid densities must share their abscissas")


# -- numeric support --------------------------------------------------------

def _support(p: Density, q: Density):
    """Common evaluation nodes, quadrature weights and the two density vectors."""
    kind = p.kind
    if kind == "grid":
        x = p.abscissas
        w = _trapezoid_weights(x)
        return x, w, p.ordinates, q.ordinates
    if kind == "normal":
        lo = min(d.mean - _NORMAL_HALF_WIDTH * math.sqrt(d.variance) for d in (p, q))
        hi = max(d.mean + _NORMAL_HALF_WIDTH * math.sqrt(d.variance) for d in (p, q))
        x = np.linspace(lo, hi, _NORMAL_POINTS)
    elif kind == "exponential":
        hi = _EXPONENTIAL_SPAN * max(p.params[0], q.params[0])
        x = np.linspace(0.0, hi, _EXPONENTIAL_POINTS)
    elif kind == "poisson":
        top = max(stats.poisson.isf(_POISSON_TAIL, d.params[0]) for d in (p, q))
        x = np.arange(0, int(top) + 2, dtype=float)
        return x, np.ones_like(x), p.pdf(x), q.pdf(x)
    else:  # bernoulli
        x = np.array([0.0, 1.0])
        return x, np.ones(2), p.pdf(x), q.pdf(x)
    return x, _trapezoid_weights(x), p.pdf(x), q.pdf(x)


def _trapezoid_weights(x: np.ndarray) -> np.ndarray:
    dx = np.diff(x)
    w = np.zeros_like(x)
    w[:-1] += dx / 2
    w[1:] += dx / 2
    return w


def _log_ratio(fp: np.ndarray, fq: np.ndarray):
    """log(p/q) on the support of p, or None if q vanishes somewhere p does not."""
    pos = fp > 0
    if np.any(fq[pos] <= 0):
        return None, pos
    out = np.zeros_like(fp)
    out[pos] = np.log(fp[pos]) - np.log(fq[pos])
    return out, pos


def _hellinger_numeric(p, q):
    x, w, fp, fq = _support(p, q)
    return float(np.sum(w * (np.sqrt(fp) - np.sqrt(fq)) ** 2))


def _moment_numeric(p, q, k, centered):
    x, w, fp, fq = _support(p, q)
    lr, pos = _log_ratio(fp, fq)
    if lr is None:
        return INFINITE
    center = float(np.sum(w * fp * lr)) if centered else 0.0
    if k == 1 and not centered:
        return max(float(np.sum(w * fp * lr)), 0.0)
    return float(np.sum((w * fp)[pos] * np.abs(lr[pos] - center) ** k))


# -- closed forms -----------------------------------------------------------

def _hellinger_closed(p, q):
    kind = p.kind
    if kind == "normal":
        m1, v1, m2, v2 = p.mean, p.variance, q.mean, q.variance
        affinity = math.sqrt(2 * math.sqrt(v1 * v2) / (v1 + v2)) * math.exp(-(m1 - m2) ** 2 / (4 * (v1 + v2)))
    elif kind == "poisson":
        affinity = math.exp(-0.5 * (math.sqrt(p.params[0]) - math.sqrt(q.params[0])) ** 2)
    elif kind == "bernoulli":
        a, b = p.params[0], q.params[0]
        affinity = math.sqrt(a * b) + math.sqrt((1 - a) * (1 - b))
    elif kind == "exponential":
        a, b = p.params[0], q.params[0]
        # 2 - 2 * 2 sqrt(ab)/(a+b), written to avoid cancellation
        return 2 * (math.sqrt(a) - math.sqrt(b)) ** 2 / (a + b)
    else:
        return _hellinger_numeric(p, q)
    return max(0.0, 2.0 * (1.0 - affinity))


def _kl_closed(p, q):
    kind = p.kind
    if kind == "normal":
        m1, v1, m2, v2 = p.mean, p.variance, q.mean, q.variance
        return 0.5 * (math.log(v2 / v1) + (v1 + (m1 - m2) ** 2) / v2 - 1.0)
    if kind == "poisson":
        a, b = p.params[0], q.params[0]
        return a * math.log(a / b) + b - a
    if kind == "bernoulli":
        a, b = p.params[0], q.params[0]
        total = 0.0
        for pa, pb in ((a, b), (1 - a, 1 - b)):
            if pa > 0:
                if pb <= 0:
                    return INFINITE
                total += pa * math.log(pa / pb)
        return max(total, 0.0)
    if kind == "exponential":
        a, b = p.params[0], q.params[0]
        return math.log(b / a) + a / b - 1.0
    return _moment_numeric(p, q, 1, centered=False)


def _var_log_ratio_closed(p, q):
    """Variance of log(p/q)(X) under X ~ p, i.e. V_{2,0}(p, q)."""
    kind = p.kind
    if kind == "normal":
        m1, v1, m2, v2 = p.mean, p.variance, q.mean, q.variance
        # log p/q = c + a x + b x^2
        a = m1 / v1 - m2 / v2
        b = 0.5 * (1 / v2 - 1 / v1)
        return (a + 2 * b * m1) ** 2 * v1 + 2 * b * b * v1 * v1
    if kind == "poisson":
        a, b = p.params[0], q.params[0]
        return a * math.log(a / b) ** 2
    if kind == "bernoulli":
        a, b = p.params[0], q.params[0]
        if a in (0.0, 1.0):
            if (a == 1.0 and b == 0.0) or (a == 0.0 and b == 1.0):
                return INFINITE
            return 0.0
        if b in (0.0, 1.0):
            return INFINITE
        diff = math.log(a / b) - math.log((1 - a) / (1 - b))
        return a * (1 - a) * diff * diff
    if kind == "exponential":
        a, b = p.params[0], q.params[0]
        return (1 / b - 1 / a) ** 2 * a * a
    return _moment_numeric(p, q, 2, centered=True)


# -- public operations ------------------------------------------------------

def hellinger_sq(p: Density, q: Density, method: str = "closed") -> float:
    """Squared Hellinger distance h^2(p, q), a number in [0, 2]."""
    _check_pair(p, q)
    if method == "numeric":
        return _hellinger_numeric(p, q)
    return _hellinger_closed(p, q)


def kl(p: Density, q: Density, method: str = "closed") -> float:
    """Kullback-Leibler divergence K(p, q); ``INFINITE`` on a support violation."""
    _check_pair(p, q)
    if method == "numeric":
        return _moment_numeric(p, q, 1, centered=False)
    return _kl_closed(p, q)


def v_k0(p: Density, q: Density, k: float = 2, method: str = "closed") -> float:
    """Centered k-th absolute moment of log(p/q) under p.

    For k = 2 this is the variance of the log-likelihood ratio.
    """
    _check_pair(p, q)
    if k <= 1:
        raise ValueError("k must exceed 1")
    if method == "closed" and k == 2 and p.kind != "grid":
        if math.isinf(_kl_closed(p, q)):
            return INFINITE
        return _var_log_ratio_closed(p, q)
    return _moment_numeric(p, q, k, centered=True)


def v_k(p: Density, q: Density, k: float = 2, method: str = "closed") -> float:
    """Uncentered k-th absolute moment of log(p/q) under p."""
    _check_pair(p, q)
    if k <= 1:
        raise ValueError("k must exceed 1")
    if method == "closed" and k == 2 and p.kind != "grid":
        mean = _kl_closed(p, q)
        if math.isinf(mean):
            return INFINITE
        return _var_log_ratio_closed(p, q) + mean * mean
    return _moment_numeric(p, q, k, centered=False)


def avg_hellinger_dn(pairs: Sequence[ComponentPair]) -> float:
    """Root of the average squared Hellinger distance over the components."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one component pair")
    total = math.fsum(hellinger_sq(p, q) for p, q in pairs)
    return math.sqrt(total / len(pairs))


def neighborhood_check(per_component_K, per_component_V, eps: float) -> bool:
    """Membership in the averaged Kullback-Leibler neighbourhood of radius ``eps``.

    True iff both the mean divergence and the mean second moment are at most
    ``eps**2``; the boundary is included.
    """
    K = np.asarray(per_component_K, dtype=float)
    V = np.asarray(per_component_V, dtype=float)
    if K.shape != V.shape:
        raise ValueError("per-component lists must have equal length")
    if K.size == 0:
        raise ValueError("need at least one component")
    if np.any(K < 0) or np.any(V < 0):
        raise ValueError("divergences must be nonnegative")
    e2 = eps * eps
    return bool(K.mean() <= e2 and V.mean() <= e2)


def bernoulli_hellinger_sq(p, q):
    """Vectorised Bernoulli squared Hellinger distance."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return (np.sqrt(p) - np.sqrt(q)) ** 2 + (np.sqrt(1 - p) - np.sqrt(1 - q)) ** 2


def poisson_hellinger_sq(a, b):
    """Vectorised Poisson squared Hellinger distance."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return 2.0 * -special.expm1(-0.5 * (np.sqrt(a) - np.sqrt(b)) ** 2)
