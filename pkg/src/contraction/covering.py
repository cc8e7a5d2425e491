"""Covering numbers, greedy covers and bracketing constructions.

All entropies are natural logarithms.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln

__all__ = [
    "PointCloud",
    "CoverReport",
    "MonotoneBrackets",
    "PoissonSieve",
    "cover_interval",
    "greedy_cover",
    "euclidean_ball_cover_bound",
    "monotone_class_entropy",
    "simplex_entropy_bound",
    "poisson_bracketing",
]

METRICS = ("euclidean", "sup", "l2-empirical")


@dataclass
class PointCloud:
    """Finite set of points with a metric.

    ``points`` has shape (N,) or (N, d).  For the ``sup`` and ``l2-empirical``
    metrics each row is a function tabulated at d fixed abscissas; the
    empirical L2 metric uses ``weights`` (uniform when omitted).
    """

    points: np.ndarray
    metric: str = "euclidean"
    weights: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise ValueError("points must be a 1-d or 2-d array")
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        self.points = pts
        if self.metric == "l2-empirical":
            w = np.full(pts.shape[1], 1.0 / pts.shape[1]) if self.weights is None else np.asarray(self.weights, float)
            if w.shape != (pts.shape[1],) or np.any(w < 0):
                raise ValueError("weights must be nonnegative with one entry per abscissa")
            self.weights = w / w.sum()

    def __len__(self):
        return self.points.shape[0]

    def distances_from(self, i: int) -> np.ndarray:
        diff = self.points - self.points[i]
        if self.metric == "euclidean":
            return np.sqrt(np.einsum("ij,ij->i", diff, diff))
        if self.metric == "sup":
            return np.max(np.abs(diff), axis=1)
        return np.sqrt((diff * diff) @ self.weights)

    def pairwise(self) -> np.ndarray:
        return np.stack([self.distances_from(i) for i in range(len(self))])


@dataclass
class CoverReport:
    class_id: str
    eps: float
    achieved_count: int
    theoretical_bound: float
    log_count: float = field(default=float("nan"))
    notes: str = ""

    def __post_init__(self):
        if self.achieved_count < 1:
            raise ValueError("a cover has at least one element")
        if math.isnan(self.log_count):
            self.log_count = math.log(self.achieved_count)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def cover_interval(eps: float, a: float, b: float) -> int:
    """Number of radius-``eps`` balls needed to cover [a, b]."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if b < a:
        raise ValueError("need a <= b")
    return max(1, math.ceil((b - a) / (2 * eps)))


def greedy_cover(cloud: PointCloud, eps: float) -> list[int]:
    """Indices of an ``eps``-cover built by farthest-first traversal.

    Starts at point 0 and repeatedly adds the point farthest from the
    current centers (lowest index on ties) until every point lies within
    ``eps`` of a center.  The centers are pairwise more than ``eps`` apart,
    so their number never exceeds the ``eps``-packing number.
    """
    if len(cloud) == 0:
        raise ValueError("empty point cloud")
    centers = [0]
    nearest = cloud.distances_from(0)
    while True:
        far = int(np.argmax(nearest))
        if nearest[far] <= eps:
            return centers
        centers.append(far)
        np.minimum(nearest, cloud.distances_from(far), out=nearest)


def euclidean_ball_cover_bound(d: int, R: float, eps: float) -> float:
    """Log of the volumetric bound (3R/eps)^d on covering a d-ball of radius R.

    Returns 0 once ``eps >= R``: a single ball then suffices.
    """
    if d < 1 or R <= 0 or eps <= 0:
        raise ValueError("need d >= 1 and positive R, eps")
    if eps >= R:
        return 0.0
    return d * math.log(3 * R / eps)


def simplex_entropy_bound(k: int, eps: float) -> float:
    """k log k + k log(1/eps)."""
    if k < 1 or eps <= 0:
        raise ValueError("need k >= 1 and eps > 0")
    return k * math.log(k) + k * math.log(1 / eps)


# -- monotone staircase brackets --------------------------------------------
#
# Functions are nondecreasing with values in [0, 1] on ordered atoms that
# carry probability weights.  Value levels are multiples of delta = 1/(L+1).
# The atoms are organised in a dyadic tree; a bracket is a set of tree
# leaves (disjoint atom ranges covering everything) together with the
# number of levels reached at the end of each leaf.  On a leaf entered at
# level a and left at level c the bracket is [delta*a, min(1, delta*(1+c))]
# (single-atom leaves use delta*c as the lower end).  A node is kept as a
# leaf exactly when its weighted squared bracket width is at most ``tau``;
# otherwise it is split in two.  The rule is deterministic, so every
# monotone function has one canonical bracket, and brackets are counted
# and searched by dynamic programming over the tree.


def _logmatmul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """log(exp(A) @ exp(B)) without overflow."""
    am = np.max(A, axis=1, keepdims=True)
    bm = np.max(B, axis=0, keepdims=True)
    am = np.where(np.isfinite(am), am, 0.0)
    bm = np.where(np.isfinite(bm), bm, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.exp(A - am) @ np.exp(B - bm)) + am + bm


def _dyadic_tree(n_atoms: int):
    lo, hi, left, right = [0], [n_atoms], [], []
    i = 0
    while i < len(lo):
        if hi[i] - lo[i] > 1:
            mid = (lo[i] + hi[i]) // 2
            left.append(len(lo))
            right.append(len(lo) + 1)
            lo += [lo[i], mid]
            hi += [mid, hi[i]]
        else:
            left.append(-1)
            right.append(-1)
        i += 1
    return np.array(lo), np.array(hi), np.array(left), np.array(right)


class MonotoneBrackets:
    """Adaptive dyadic brackets for nondecreasing [0, 1]-valued functions.

    Parameters
    ----------
    atom_weights : array_like
        Probability weights of the ordered atoms (normalised internally).
    levels : int
        Number L of interior value levels; the level mesh is 1/(L+1).
    tau : float
        Largest weighted squared width tolerated on an unsplit leaf.
    eps : float, optional
        Nominal bracket width, kept for reporting.
    """

    def __init__(self, atom_weights, levels: int, tau: float, eps: float = float("nan")):
        w = np.asarray(atom_weights, dtype=float)
        self.atom_weights = w / w.sum()
        self.levels = int(levels)
        self.delta = 1.0 / (self.levels + 1)
        self.tau = float(tau)
        self.eps = eps
        self.lo, self.hi, self.left, self.right = _dyadic_tree(w.size)
        cw = np.concatenate([[0.0], np.cumsum(self.atom_weights)])
        self.node_weight = cw[self.hi] - cw[self.lo]
        k = np.arange(self.levels + 1)
        self.upper_level = np.minimum(1.0, self.delta * (1 + k))
        self._tri = k[:, None] <= k[None, :]
        self._k = k
        self._reachable = self._find_reachable()
        self._log_counts = None
        self._width = None

    # structure ------------------------------------------------------------

    def contribution(self, v: int) -> np.ndarray:
        """Weighted squared width of node ``v`` used as a leaf, indexed by (a, c)."""
        k = self._k
        if self.hi[v] - self.lo[v] == 1:
            gap = self.upper_level - self.delta * k
            return np.broadcast_to(self.node_weight[v] * gap * gap, (k.size, k.size))
        gap = self.upper_level[None, :] - self.delta * k[:, None]
        return self.node_weight[v] * gap * gap

    def is_leaf(self, v: int) -> np.ndarray:
        if self.left[v] < 0:
            return np.ones((self.levels + 1,) * 2, dtype=bool)
        return self.contribution(v) <= self.tau

    def _find_reachable(self) -> np.ndarray:
        reach = np.zeros(self.lo.size, dtype=bool)
        reach[0] = True
        for v in range(self.lo.size):
            if reach[v] and self.left[v] >= 0 and not self.is_leaf(v)[self._tri].all():
                reach[self.left[v]] = reach[self.right[v]] = True
        return reach

    def _order(self):
        return np.flatnonzero(self._reachable)[::-1]

    # dynamic programmes ------------------------------------------------------

    def log_partition(self, leaf_logw) -> list:
        """Per-node log of the summed leaf weights over all sub-brackets.

        ``leaf_logw(v)`` gives, for node ``v`` used as a leaf, a vector of
        log weights indexed by the exit level c.  Entry (a, c) of the result
        for node v sums over every admissible way to cover v entering at
        level a and leaving at level c.
        """
        out = [None] * self.lo.size
        for v in self._order():
            leaf = self.is_leaf(v) & self._tri
            lw = np.broadcast_to(np.asarray(leaf_logw(v), float)[None, :], leaf.shape)
            table = np.where(leaf, lw, -np.inf)
            split = self._tri & ~leaf
            if split.any():
                table = np.where(split, _logmatmul(out[self.left[v]], out[self.right[v]]), table)
            out[v] = table
        return out

    @property
    def log_count(self) -> float:
        if self._log_counts is None:
            zero = np.zeros(self.levels + 1)
            self._log_counts = self.log_partition(lambda v: zero)
        row = self._log_counts[0][0]
        return float(np.logaddexp.reduce(row))

    @property
    def width_bound(self) -> float:
        """Largest L2 width over all brackets in the collection."""
        if self._width is None:
            best = [None] * self.lo.size
            for v in self._order():
                leaf = self.is_leaf(v) & self._tri
                table = np.where(leaf, self.contribution(v), -np.inf)
                split = self._tri & ~leaf
                if split.any():
                    combined = np.max(best[self.left[v]][:, :, None] + best[self.right[v]][None, :, :], axis=1)
                    table = np.where(split, combined, table)
                best[v] = table
            self._width = math.sqrt(max(0.0, float(np.max(best[0][0]))))
        return self._width

    # brackets ------------------------------------------------------------------

    def reached_levels(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        if v.shape != self.atom_weights.shape:
            raise ValueError("need one value per atom")
        if np.any(np.diff(v) < -1e-12) or np.any(v < -1e-12) or np.any(v > 1 + 1e-12):
            raise ValueError("values must be nondecreasing and lie in [0, 1]")
        reached = np.minimum(np.floor(np.clip(v, 0, 1) / self.delta), self.levels).astype(int)
        return np.maximum.accumulate(reached)

    def index_of(self, values) -> list[tuple[int, int, int]]:
        """Canonical bracket of a monotone function as (node, a, c) leaves."""
        reached = self.reached_levels(values)
        leaves, stack = [], [0]
        while stack:
            v = stack.pop()
            a = int(reached[self.lo[v] - 1]) if self.lo[v] > 0 else 0
            c = int(reached[self.hi[v] - 1])
            if self.is_leaf(v)[a, c]:
                leaves.append((v, a, c))
            else:
                stack += [self.right[v], self.left[v]]
        return leaves

    def bracket(self, leaves) -> tuple[np.ndarray, np.ndarray]:
        """Lower and upper functions at the atoms for a list of leaves."""
        lower = np.empty(self.atom_weights.size)
        upper = np.empty(self.atom_weights.size)
        for v, a, c in leaves:
            sl = slice(self.lo[v], self.hi[v])
            upper[sl] = self.upper_level[c]
            lower[sl] = self.delta * (c if self.hi[v] - self.lo[v] == 1 else a)
        return lower, upper

    def bracket_for(self, values) -> tuple[np.ndarray, np.ndarray]:
        return self.bracket(self.index_of(values))

    def width(self, lower, upper) -> float:
        gap = np.asarray(upper) - np.asarray(lower)
        return float(math.sqrt(np.sum(self.atom_weights * gap * gap)))

    def enumerate(self, limit: int = 100_000):
        """Every bracket, as a list of leaves (small collections only)."""
        if self.log_count > math.log(limit):
            raise ValueError(f"{math.exp(self.log_count):.3g} brackets exceed the enumeration limit")

        def walk(v, a, c):
            if self.is_leaf(v)[a, c]:
                yield [(v, a, c)]
                return
            for b in range(a, c + 1):
                for head in walk(self.left[v], a, b):
                    for tail in walk(self.right[v], b, c):
                        yield head + tail

        for c in range(self.levels + 1):
            yield from walk(0, 0, c)

    def sample(self, log_tables, leaf_logw, rng: np.random.Generator, size: int, leaf_stat=None):
        """Draw brackets with probability proportional to their leaf weights.

        ``log_tables`` comes from :meth:`log_partition` with the same
        ``leaf_logw``.  Returns, per draw, the sum of ``leaf_stat(v)[c]``
        over its leaves (zeros when ``leaf_stat`` is None) and the exit level
        of the root.
        """
        total = np.zeros(size)
        root = log_tables[0][0]
        c0 = _categorical(rng, np.broadcast_to(root, (size, root.size)))
        active = {0: (np.arange(size), np.zeros(size, dtype=int), c0)}
        for v in np.flatnonzero(self._reachable):
            if v not in active:
                continue
            idx, a, c = active.pop(v)
            leaf = self.is_leaf(v)[a, c]
            if leaf.any() and leaf_stat is not None:
                total[idx[leaf]] += np.asarray(leaf_stat(v), float)[c[leaf]]
            split = ~leaf
            if not split.any():
                continue
            idx, a, c = idx[split], a[split], c[split]
            L, R = self.left[v], self.right[v]
            logits = log_tables[L][a, :] + log_tables[R][:, c].T
            b = _categorical(rng, logits)
            for child, ca, cc in ((L, a, b), (R, b, c)):
                if child in active:
                    pi, pa, pc = active[child]
                    active[child] = (np.concatenate([pi, idx]), np.concatenate([pa, ca]), np.concatenate([pc, cc]))
                else:
                    active[child] = (idx, ca, cc)
        return total, c0


def _categorical(rng: np.random.Generator, logits: np.ndarray) -> np.ndarray:
    """One categorical draw per row of unnormalised log probabilities."""
    logits = np.asarray(logits, dtype=float)
    with np.errstate(invalid="ignore"):
        g = logits - np.log(-np.log(rng.random(logits.shape)))
    g = np.where(np.isfinite(logits), g, -np.inf)
    return np.argmax(g, axis=1)


def _search_brackets(eps: float, atom_weights: np.ndarray, level_ratio: Optional[float] = None) -> MonotoneBrackets:
    """Smallest collection found over a few level meshes, each with the largest admissible tau.

    With ``level_ratio`` the level mesh is pinned to about eps / level_ratio
    and only tau is searched.
    """
    w = np.asarray(atom_weights, dtype=float)
    if eps >= 1:
        return MonotoneBrackets(w, 0, 1.0, eps)
    if level_ratio is not None:
        candidates = {max(1, math.ceil(level_ratio / eps) - 1)}
    else:
        candidates = {max(1, math.ceil(c / eps) - 1) for c in (1.2, 1.5, 1.8)}
        candidates |= {2 ** m - 1 for m in range(1, 20) if 1.2 / eps <= 2 ** m <= 2.0 / eps + 1}
    best = None
    for L in sorted(candidates):
        delta = 1.0 / (L + 1)
        if delta >= eps:
            continue
        lo, hi = math.log(eps**4 * 1e-3), math.log(eps * eps)
        if MonotoneBrackets(w, L, math.exp(lo)).width_bound > eps:
            continue
        for _ in range(16):
            mid = 0.5 * (lo + hi)
            if MonotoneBrackets(w, L, math.exp(mid)).width_bound <= eps:
                lo = mid
            else:
                hi = mid
        cand = MonotoneBrackets(w, L, math.exp(lo), eps)
        if best is None or cand.log_count < best.log_count:
            best = cand
    if best is None:
        raise ValueError("atom grid too coarse for the requested eps")
    return best


def monotone_class_entropy(eps: float, grid_size: int) -> MonotoneBrackets:
    """Brackets of L2 width at most ``eps`` for monotone [0, 1]-valued functions.

    The functions live on ``grid_size`` equally weighted ordered points.  The
    returned collection carries ``log_count`` and produces the bracket of
    any monotone function through :meth:`MonotoneBrackets.bracket_for`.
    For ``eps >= 1`` the single bracket [0, 1] is returned.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if grid_size < 1:
        raise ValueError("grid_size must be positive")
    return _search_brackets(eps, np.full(grid_size, 1.0 / grid_size))


@dataclass
class PoissonSieve:
    """Upper link brackets for monotone links with values in [lo, hi].

    Covariates are grouped into distinct sorted atoms; ``brackets`` works on
    the normalised scale (link - lo)/(hi - lo).
    """

    eps: float
    lo: float
    hi: float
    covariates: np.ndarray
    atoms: np.ndarray
    atom_of_covariate: np.ndarray
    brackets: MonotoneBrackets

    @property
    def log_count(self) -> float:
        return self.brackets.log_count

    def level_links(self) -> np.ndarray:
        """Upper link value attached to each exit level."""
        return self.lo + (self.hi - self.lo) * self.brackets.upper_level

    def link(self, leaves) -> np.ndarray:
        """Upper link of a sieve element evaluated at every covariate."""
        _, upper = self.brackets.bracket(leaves)
        return self.lo + (self.hi - self.lo) * upper[self.atom_of_covariate]

    def element_for(self, psi_values):
        """Sieve element dominating a monotone link given at the covariates."""
        psi = np.asarray(psi_values, dtype=float)
        if np.any(psi < self.lo - 1e-12) or np.any(psi > self.hi + 1e-12):
            raise ValueError("link leaves [lo, hi]")
        at_atom = np.full(self.atoms.size, -np.inf)
        np.maximum.at(at_atom, self.atom_of_covariate, (psi - self.lo) / (self.hi - self.lo))
        low = np.full(self.atoms.size, np.inf)
        np.minimum.at(low, self.atom_of_covariate, (psi - self.lo) / (self.hi - self.lo))
        if np.any(np.abs(at_atom - low) > 1e-12):
            raise ValueError("link must be a function of the covariate")
        return self.brackets.index_of(np.clip(at_atom, 0, 1))

    def l2_gap(self, leaves, psi_values) -> float:
        diff = self.link(leaves) - np.asarray(psi_values, dtype=float)
        return float(math.sqrt(np.mean(diff * diff)))

    def enumerate(self, limit: int = 100_000) -> np.ndarray:
        """All upper links, one row per element (small sieves only)."""
        return np.array([self.link(leaves) for leaves in self.brackets.enumerate(limit)])


def poisson_bracketing(eps: float, L: float, U: float, covariates: Sequence[float],
                       level_ratio: Optional[float] = None) -> PoissonSieve:
    """Upper brackets, in L2 of the empirical covariate law, for monotone links.

    Every nondecreasing link with values in [L, U] is dominated at the
    covariates by a sieve element within L2 distance ``eps``.  For
    ``eps >= U - L`` the sieve is the single constant link U.  ``level_ratio``
    pins the link level mesh near eps / level_ratio instead of searching it,
    which keeps the sieve geometry comparable across eps.
    """
    if not 0 < L < U:
        raise ValueError("need 0 < L < U")
    if eps <= 0:
        raise ValueError("eps must be positive")
    z = np.asarray(covariates, dtype=float)
    if z.size == 0:
        raise ValueError("need at least one covariate")
    atoms, inverse, counts = np.unique(z, return_inverse=True, return_counts=True)
    brackets = _search_brackets(eps / (U - L), counts.astype(float), level_ratio)
    return PoissonSieve(eps, float(L), float(U), z, atoms, inverse, brackets)
