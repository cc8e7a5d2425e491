"""Fixed-design Gaussian regression with a B-spline Gaussian prior.

The regression function is f_beta = sum_j beta_j B_j with B_1..B_J the
B-splines of order q on K equal intervals of (0, 1] and beta ~ N(0, I).
With known noise level the posterior for beta is Gaussian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ..seeding import make_rng


@dataclass(frozen=True)
class SplineBasis:
    """Order-q B-splines (degree q - 1) on K equal intervals of (0, 1]."""

    q: int
    K: int

    def __post_init__(self):
        if self.q < 1 or self.K < 1:
            raise ValueError("need q >= 1 and K >= 1")

    @property
    def J(self) -> int:
        return self.q + self.K - 1

    @property
    def knots(self) -> np.ndarray:
        inner = np.arange(1, self.K) / self.K
        return np.concatenate([np.zeros(self.q), inner, np.ones(self.q)])

    @classmethod
    def with_dimension(cls, J: int, q: int) -> "SplineBasis":
        if J < q:
            raise ValueError("dimension must be at least the order")
        return cls(q, J - q + 1)


def bspline_basis(basis: SplineBasis, x) -> np.ndarray:
    """Basis values at points of (0, 1]; shape (len(x), J), or (J,) for a scalar.

    Cox-de Boor recursion with half-open intervals (t_j, t_{j+1}].
    """
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x <= 0) or np.any(x > 1):
        raise ValueError("basis is defined on (0, 1]")
    t = basis.knots
    # order 1: indicators of the K nondegenerate knot spans
    B = ((t[None, :-1] < x[:, None]) & (x[:, None] <= t[None, 1:])).astype(float)
    for order in range(2, basis.q + 1):
        nb = t.size - order
        left_den = t[order - 1: order - 1 + nb] - t[:nb]
        right_den = t[order: order + nb] - t[1: 1 + nb]
        with np.errstate(divide="ignore", invalid="ignore"):
            left = np.where(left_den > 0, (x[:, None] - t[None, :nb]) / left_den, 0.0)
            right = np.where(right_den > 0, (t[None, order: order + nb] - x[:, None]) / right_den, 0.0)
        B = left * B[:, :nb] + right * B[:, 1: nb + 1]
    return B[0] if scalar else B


@dataclass
class RegressionData:
    z: np.ndarray
    x: np.ndarray
    sigma: float = 1.0
    seed: object = None

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        if self.z.size == 0 or self.z.shape != self.x.shape:
            raise ValueError("need matching nonempty design and responses")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


def uniform_design(n: int) -> np.ndarray:
    return np.arange(1, n + 1) / n


def simulate(f0, n: int, sigma: float = 1.0, seed=None, design=None) -> RegressionData:
    rng = make_rng(seed)
    z = uniform_design(n) if design is None else np.asarray(design, float)
    return RegressionData(z, f0(z) + sigma * rng.standard_normal(z.size), sigma, seed)


@dataclass
class GramReport:
    gram: np.ndarray
    lam_min_J: float
    lam_max_J: float
    singular: bool


def design_gram(basis: SplineBasis, design) -> GramReport:
    """Average outer product of basis vectors over the design."""
    z = np.asarray(design, dtype=float)
    if z.size < basis.J:
        raise ValueError("need at least J design points")
    B = bspline_basis(basis, z)
    G = B.T @ B / z.size
    eig = linalg.eigvalsh(G)
    return GramReport(G, float(eig[0] * basis.J), float(eig[-1] * basis.J), bool(eig[0] <= 1e-12 * eig[-1]))


@dataclass
class GaussianPosterior:
    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray  # lower factor of cov


def posterior_beta(data: RegressionData, basis: SplineBasis) -> GaussianPosterior:
    """Posterior of the coefficients under beta ~ N(0, I)."""
    B = bspline_basis(basis, data.z)
    s2 = data.sigma**2
    precision = B.T @ B / s2 + np.eye(basis.J)
    cf = linalg.cho_factor(precision, lower=True)
    mean = linalg.cho_solve(cf, B.T @ data.x / s2)
    cov = linalg.cho_solve(cf, np.eye(basis.J))
    cov = 0.5 * (cov + cov.T)
    return GaussianPosterior(mean, cov, linalg.cholesky(cov, lower=True))


def empirical_norm(values) -> float:
    """Root mean square over the design points."""
    v = np.asarray(values, dtype=float)
    return float(math.sqrt(np.mean(v * v)))


def coefficient_norm_ratio(basis: SplineBasis, design, beta1, beta2) -> float:
    """sqrt(J) ||f_beta1 - f_beta2||_n / ||beta1 - beta2||."""
    d = np.asarray(beta1, float) - np.asarray(beta2, float)
    nrm = np.linalg.norm(d)
    if nrm == 0:
        return float("nan")
    return math.sqrt(basis.J) * empirical_norm(bspline_basis(basis, design) @ d) / nrm


def spline_approx_error(f0, basis: SplineBasis, fine: int = 4096) -> float:
    """Sup-norm error of the least-squares spline fit to f0 on a fine grid."""
    x = np.arange(1, fine + 1) / fine
    B = bspline_basis(basis, x)
    y = f0(x)
    coef, *_ = np.linalg.lstsq(B, y, rcond=None)
    return float(np.max(np.abs(B @ coef - y)))


def posterior_distance_draws(data: RegressionData, basis: SplineBasis, f0, draws: int, seed) -> np.ndarray:
    """Posterior draws of ||f_beta - f0||_n.

    Uses d^2 = c + 2 g'e + e'He for beta = mean + chol e, so each draw costs
    O(J^2) instead of O(nJ).
    """
    rng = make_rng(seed)
    post = posterior_beta(data, basis)
    B = bspline_basis(basis, data.z)
    n = data.z.size
    BL = B @ post.chol
    resid = B @ post.mean - f0(data.z)
    H = BL.T @ BL / n
    g = BL.T @ resid / n
    c = resid @ resid / n
    e = rng.standard_normal((draws, basis.J))
    d2 = c + 2 * e @ g + np.einsum("ij,jk,ik->i", e, H, e)
    return np.sqrt(np.maximum(d2, 0.0))


def posterior_mass_outside(data, basis, f0, r: float, draws: int = 4000, seed=None) -> float:
    return float(np.mean(posterior_distance_draws(data, basis, f0, draws, seed) >= r))


def contraction_radius(data, basis, f0, q: float = 0.9, draws: int = 4000, seed=None) -> float:
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    return float(np.quantile(posterior_distance_draws(data, basis, f0, draws, seed), q))


def default_dimension(n: int, alpha: float, q: int, scale: float = 2.0) -> int:
    """J = ceil(scale * n^(1/(1 + 2 alpha))), at least q."""
    return max(q, math.ceil(scale * n ** (1 / (1 + 2 * alpha)) - 1e-9))


def holder_spline(x):
    """A fixed cubic spline with a kink in its third derivative at 0.37."""
    x = np.asarray(x, float)
    return np.sin(3 * x) + 2.0 * np.maximum(x - 0.37, 0.0) ** 3


F0_REGISTRY = {
    "constant": lambda x: np.full_like(np.asarray(x, float), 0.7),
    "linear": lambda x: np.asarray(x, float),
    "sin2pi": lambda x: np.sin(2 * np.pi * np.asarray(x, float)),
    "holder-spline": holder_spline,
}
