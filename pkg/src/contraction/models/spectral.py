"""Stationary Gaussian time series and Whittle estimation of the spectral density.

Spectral densities live on (-pi, pi] with autocovariances
gamma_h = int e^{i h w} f(w) dw.  The Whittle part works on the unit interval
through lambda = w / pi, so Fourier ordinates sit at lambda_j = 2j/n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import linalg, special

from ..priors import BernsteinDirichletPrior, sample_bernstein_batch
from ..seeding import make_rng

MIN_ESS = 50.0


def to_unit(omega):
    """Frequency w in [0, pi] to lambda = w / pi in [0, 1]."""
    return np.asarray(omega, dtype=float) / math.pi


def from_unit(lam):
    return math.pi * np.asarray(lam, dtype=float)


@dataclass
class SpectralDensity:
    """Even spectral density given by a callable on (-pi, pi].

    The tabulation on ``grid_points`` equispaced frequencies is used to check
    the bounds m <= f <= M and to report Gamma = max |log f|.
    """

    func: Callable
    grid_points: int = 1024

    def __post_init__(self):
        w = self.grid()
        v = np.asarray(self.func(w), dtype=float)
        if np.any(v <= 0) or not np.all(np.isfinite(v)):
            raise ValueError("spectral density must be positive and finite")
        if not np.allclose(v, self.func(-w), rtol=1e-10, atol=1e-14):
            raise ValueError("spectral density must be even")
        self.values = v
        self.m = float(v.min())
        self.M = float(v.max())
        self.log_bound = float(np.max(np.abs(np.log(v))))

    def grid(self, points: Optional[int] = None) -> np.ndarray:
        N = self.grid_points if points is None else points
        return -math.pi + 2 * math.pi * np.arange(1, N + 1) / N

    def __call__(self, omega):
        return self.func(np.asarray(omega, dtype=float))

    def on_unit(self, lam):
        """The density as a function of lambda in [0, 1]."""
        return self.func(from_unit(lam))

    @classmethod
    def constant(cls, value: float) -> "SpectralDensity":
        return cls(lambda w: np.full(np.shape(w), float(value)))


def _grid_size(n: int, base: int) -> int:
    return max(base, 4 * n)


def autocovariances(f: SpectralDensity, n: int) -> np.ndarray:
    """gamma_0..gamma_{n-1} by the periodic trapezoid rule on max(grid, 4n) points."""
    N = _grid_size(n, f.grid_points)
    w = f.grid(N)
    # w_j = -pi + 2 pi (j + 1)/N, so e^{i h w_j} = (-1)^h e^{2 pi i h (j + 1)/N}
    coef = np.fft.ifft(np.roll(f(w), 1)) * N
    h = np.arange(n)
    gamma = (2 * math.pi / N) * np.real(coef[h]) * np.where(h % 2 == 0, 1.0, -1.0)
    return gamma


def autocovariance(f: SpectralDensity, h: int) -> float:
    """gamma_h on the density's own grid; |h| above a quarter of the grid is refused."""
    h = abs(int(h))
    if h > f.grid_points / 4:
        raise ValueError(f"lag {h} aliases on a {f.grid_points}-point grid")
    w = f.grid()
    return float((2 * math.pi / f.grid_points) * np.sum(np.cos(h * w) * f.values))


def toeplitz(f: SpectralDensity, n: int) -> np.ndarray:
    """Covariance matrix T_n(f) of n consecutive observations."""
    return linalg.toeplitz(autocovariances(f, n))


def l2_sq(f: SpectralDensity, g: SpectralDensity, points: int = 4096) -> float:
    """||f - g||_2^2 over (-pi, pi]."""
    w = f.grid(points)
    d = f(w) - g(w)
    return float(2 * math.pi / points * np.sum(d * d))


@dataclass
class LoglikMoments:
    mean: float
    variance: float


def gaussian_ts_loglik_moments(f: SpectralDensity, g: SpectralDensity, n: int) -> LoglikMoments:
    """Exact mean and variance of log(p_f / p_g) for n observations drawn under f.

    With mu the eigenvalues of T_g^{-1} T_f, the mean is sum(mu - 1 - log mu)/2
    and the variance is sum((mu - 1)^2)/2.
    """
    if n > 256:
        raise ValueError("dense matrix algebra limited to n <= 256")
    Tf, Tg = toeplitz(f, n), toeplitz(g, n)
    try:
        mu = linalg.eigh(Tf, Tg, eigvals_only=True)
    except linalg.LinAlgError as exc:
        raise ValueError("covariance matrix is not positive definite") from exc
    if np.any(mu <= 0):
        raise ValueError("covariance matrix is not positive definite")
    return LoglikMoments(float(0.5 * np.sum(mu - 1 - np.log(mu))), float(0.5 * np.sum((mu - 1) ** 2)))


def gaussian_ts_loglik_ratio(x: np.ndarray, f: SpectralDensity, g: SpectralDensity) -> np.ndarray:
    """log p_f(x) - log p_g(x) for each row of ``x``."""
    x = np.atleast_2d(x)
    n = x.shape[1]
    cf, cg = linalg.cho_factor(toeplitz(f, n)), linalg.cho_factor(toeplitz(g, n))
    qf = np.sum(x * linalg.cho_solve(cf, x.T).T, axis=1)
    qg = np.sum(x * linalg.cho_solve(cg, x.T).T, axis=1)
    logdet = 2 * np.sum(np.log(np.diag(cf[0]))) - 2 * np.sum(np.log(np.diag(cg[0])))
    return -0.5 * logdet - 0.5 * (qf - qg)


def simulate_gaussian_ts(f: SpectralDensity, n: int, seed=None, size: Optional[int] = None) -> np.ndarray:
    """Exact draw of X_1..X_n by circulant embedding, Cholesky as fallback."""
    if n > 8192:
        raise ValueError("series length limited to 8192")
    rng = make_rng(seed)
    gamma = autocovariances(f, n)
    rows = 1 if size is None else size
    if n == 1:
        out = math.sqrt(gamma[0]) * rng.standard_normal((rows, 1))
        return out[0] if size is None else out
    c = np.concatenate([gamma, gamma[-2:0:-1]])
    lam = np.real(np.fft.fft(c))
    m = c.size
    if lam.min() >= -1e-10 * lam.max():
        lam = np.maximum(lam, 0.0)
        z = rng.standard_normal((rows, m)) + 1j * rng.standard_normal((rows, m))
        y = np.fft.fft(np.sqrt(lam / m) * z, axis=1)
        out = np.real(y[:, :n])
    else:
        try:
            L = np.linalg.cholesky(linalg.toeplitz(gamma))
        except np.linalg.LinAlgError as exc:
            raise ValueError("covariance matrix is not positive definite") from exc
        out = rng.standard_normal((rows, n)) @ L.T
    return out[0] if size is None else out


# -- periodogram and Whittle likelihood ------------------------------------------------

@dataclass
class Periodogram:
    """Ordinates I_n(lambda_j) at lambda_j = 2j/n, j = 1..floor(n/2)."""

    n: int
    freqs: np.ndarray
    values: np.ndarray


def fourier_frequencies(n: int) -> np.ndarray:
    return 2 * np.arange(1, n // 2 + 1) / n


def periodogram(x) -> Periodogram:
    """I_n(lambda) = |sum_t x_t e^{-i t pi lambda}|^2 / (2 pi n)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        raise ValueError("need at least 4 observations")
    dft = np.fft.fft(x)[1:n // 2 + 1]
    return Periodogram(n, fourier_frequencies(n), np.abs(dft) ** 2 / (2 * math.pi * n))


def _at_ordinates(f, freqs) -> np.ndarray:
    values = f(freqs) if callable(f) else np.asarray(f, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.shape[-1] != freqs.size:
        raise ValueError("need one density value per ordinate")
    if np.any(values <= 0):
        raise ValueError("spectral density must be positive at the ordinates")
    return values


def whittle_loglik(f, pg: Periodogram) -> float:
    """sum_j [-log f(lambda_j) - I(lambda_j) / f(lambda_j)].

    ``f`` is a callable on the unit interval or its values at the ordinates.
    """
    v = _at_ordinates(f, pg.freqs)
    return float(np.sum(-np.log(v) - pg.values / v))


def dbar_distance(f1, f2, n: int) -> float:
    """Root mean squared difference of two unit-interval densities at lambda_j = 2j/n."""
    freqs = fourier_frequencies(n)
    d = _at_ordinates(f1, freqs) - _at_ordinates(f2, freqs)
    return float(math.sqrt(np.mean(d * d)))


def exponential_dn_sq(f1, f2, n: int) -> float:
    """Average squared Hellinger distance of exponentials with means f(lambda_j)."""
    freqs = fourier_frequencies(n)
    a, b = _at_ordinates(f1, freqs), _at_ordinates(f2, freqs)
    return float(np.mean(2 * (np.sqrt(a) - np.sqrt(b)) ** 2 / (a + b)))


def dbar_sandwich(f1, f2, n: int, m: float, M: float) -> tuple[float, float, float]:
    """(dbar^2 / (4 M^2), d_n^2, dbar^2 / (4 m^2)) for densities with values in [m, M]."""
    db2 = dbar_distance(f1, f2, n) ** 2
    return db2 / (4 * M * M), exponential_dn_sq(f1, f2, n), db2 / (4 * m * m)


# -- Whittle posterior by importance sampling ---------------------------------------------

def order_cap(n: int) -> int:
    """Sieve truncation k_n = ceil(n^(1/3) (log n)^(2/3))."""
    return max(1, math.ceil(n ** (1 / 3) * math.log(max(n, 2)) ** (2 / 3)))


def whittle_prior(n: int, m: float = 0.05, M: float = 0.5, **kwargs) -> BernsteinDirichletPrior:
    """Bernstein-Dirichlet prior with the order pmf capped at ``order_cap(n)``."""
    return BernsteinDirichletPrior(m, M, k_max=order_cap(n), **kwargs)


@dataclass
class SpectralPosterior:
    freqs: np.ndarray
    log_weights: np.ndarray
    weights: np.ndarray
    ess: float
    reliable: bool
    orders: np.ndarray
    taus: np.ndarray
    extra: Optional[np.ndarray] = None
    distances: Optional[np.ndarray] = None

    def mean_at_extra(self) -> np.ndarray:
        return self.weights @ self.extra


def whittle_posterior_is(series, prior: BernsteinDirichletPrior, draws: int = 10**4, seed=None,
                         truth: Optional[Callable] = None, at=None, chunk: int = 2000) -> SpectralPosterior:
    """Importance sample of the Whittle posterior using prior draws as proposals.

    ``truth`` (a unit-interval density) adds the per-draw dbar distance;
    ``at`` adds draw values at extra unit-interval points.  An empty series
    returns the prior with uniform weights.
    """
    if draws < 10**4:
        raise ValueError("need at least 10^4 prior draws")
    x = np.asarray(series, dtype=float)
    if x.size:
        pg = periodogram(x)
        freqs, ordinates = pg.freqs, pg.values
    else:
        freqs, ordinates = np.empty(0), np.empty(0)
    extra_at = np.empty(0) if at is None else np.asarray(at, dtype=float)
    points = np.concatenate([freqs, extra_at])
    f0 = None if truth is None or not freqs.size else np.asarray(truth(freqs), dtype=float)
    rng = make_rng(seed)
    logw, orders, taus, extra, dist = [], [], [], [], []
    for start in range(0, draws, chunk):
        size = min(chunk, draws - start)
        values, k, t = sample_bernstein_batch(prior, rng, size, points)
        at_ord, at_extra = values[:, :freqs.size], values[:, freqs.size:]
        logw.append(np.sum(-np.log(at_ord) - ordinates / at_ord, axis=1))
        orders.append(k)
        taus.append(t)
        extra.append(at_extra)
        if f0 is not None:
            dist.append(np.sqrt(np.mean((at_ord - f0) ** 2, axis=1)))
    logw = np.concatenate(logw)
    w = np.exp(logw - special.logsumexp(logw))
    ess = float(1.0 / np.sum(w * w))
    return SpectralPosterior(freqs, logw, w, ess, ess >= MIN_ESS, np.concatenate(orders), np.concatenate(taus),
                             np.concatenate(extra) if at is not None else None,
                             np.concatenate(dist) if dist else None)


def read_series(path) -> np.ndarray:
    """One-column CSV with header ``x``."""
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "x":
            raise ValueError(f"expected header 'x', found {header!r}")
        return np.array([float(line) for line in fh if line.strip()])
