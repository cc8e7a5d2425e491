"""Monte Carlo checks of likelihood-ratio tests and of the evidence lower bound.

Each check simulates the relevant experiment, applies an explicit test and
compares empirical error frequencies with the corresponding exponential or
Gaussian bound.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import optimize, special, stats

from . import divergences as dv
from .covering import PointCloud, greedy_cover
from .seeding import derive_seed, make_rng

CHUNK = 10_000


@dataclass
class TestReport:
    """Error frequencies of one test against its bounds."""

    __test__ = False

    n: int
    eps: float
    type1: float
    type1_se: float
    type1_bound: float
    type2: float
    type2_se: float
    type2_bound: float
    replicates: int
    label: str = ""

    @property
    def within_bounds(self) -> bool:
        return (self.type1 <= self.type1_bound + 4 * self.type1_se
                and self.type2 <= self.type2_bound + 4 * self.type2_se)

    def to_json(self) -> str:
        out = asdict(self)
        out["within_bounds"] = self.within_bounds
        return json.dumps(out)


def _freq(hits: int, total: int) -> tuple[float, float]:
    p = hits / total
    return p, math.sqrt(p * (1 - p) / total)


# -- white-noise test --------------------------------------------------------------

def _whitenoise_rejections(theta, theta0, theta1, n, replicates, rng) -> int:
    """Count of {2<theta1 - theta0, X> > |theta1|^2 - |theta0|^2} with X = theta + Z/sqrt(n)."""
    diff = theta1 - theta0
    cut = theta1 @ theta1 - theta0 @ theta0
    hits = 0
    for start in range(0, replicates, CHUNK):
        m = min(CHUNK, replicates - start)
        x = theta + rng.standard_normal((m, theta.size)) / math.sqrt(n)
        hits += int(np.count_nonzero(2 * (x @ diff) > cut))
    return hits


def default_alternatives(theta0, theta1, count: int = 8, seed=0) -> list:
    """theta1, the point of the quarter ball nearest theta0, and random boundary points."""
    theta0, theta1 = np.asarray(theta0, float), np.asarray(theta1, float)
    diff = theta1 - theta0
    radius = np.linalg.norm(diff) / 4
    rng = make_rng(seed)
    out = [theta1, theta1 - diff / 4]
    for _ in range(count):
        u = rng.standard_normal(theta1.size)
        out.append(theta1 + radius * u / np.linalg.norm(u))
    return out


def whitenoise_lr_test(theta0, theta1, n: float, replicates: int = 10**5, seed=None,
                       alternatives: Optional[Sequence] = None) -> TestReport:
    """Linear test of theta0 against theta1 in the Gaussian sequence model.

    Type I is bounded by 1 - Phi(sqrt(n) |theta1 - theta0| / 2); type II at
    every theta with |theta - theta1| <= |theta1 - theta0| / 4 by
    1 - Phi(sqrt(n) |theta1 - theta0| / 4).
    """
    theta0, theta1 = np.asarray(theta0, float), np.asarray(theta1, float)
    dist = float(np.linalg.norm(theta1 - theta0))
    if dist == 0:
        raise ValueError("theta0 and theta1 must differ")
    rng = make_rng(seed)
    alts = default_alternatives(theta0, theta1) if alternatives is None else [np.asarray(a, float) for a in alternatives]
    for a in alts:
        if np.linalg.norm(a - theta1) > dist / 4 * (1 + 1e-12):
            raise ValueError("alternatives must lie within |theta1 - theta0|/4 of theta1")
    t1, se1 = _freq(_whitenoise_rejections(theta0, theta0, theta1, n, replicates, rng), replicates)
    worst, worst_se = 0.0, 0.0
    for a in alts:
        p, se = _freq(replicates - _whitenoise_rejections(a, theta0, theta1, n, replicates, rng), replicates)
        if p >= worst:
            worst, worst_se = p, se
    root = math.sqrt(n) * dist
    return TestReport(int(n), dist, t1, se1, float(stats.norm.sf(root / 2)), worst, worst_se,
                      float(stats.norm.sf(root / 4)), replicates, "whitenoise")


# -- product experiments -------------------------------------------------------------

Components = Union[dv.Density, Sequence[dv.Density]]


def _as_list(p: Components, n: int) -> list:
    if isinstance(p, dv.Density):
        return [p] * n
    p = list(p)
    if len(p) != n:
        raise ValueError("need one component per observation")
    return p


def _log_pdf(d: dv.Density, x):
    with np.errstate(divide="ignore"):
        return np.log(d.pdf(x))


def _natural(d: dv.Density) -> tuple[float, float]:
    """Natural parameter and log-partition of a one-parameter family member."""
    if d.family == "normal-location":
        return d.mean, 0.5 * d.mean**2
    if d.family == "poisson":
        return math.log(d.params[0]), d.params[0]
    p = d.params[0]
    if p in (0.0, 1.0):
        raise ValueError("degenerate Bernoulli")
    return math.log(p / (1 - p)), -math.log1p(-p)


def _sum_sample(d: dv.Density, n: int, rng, m: int) -> np.ndarray:
    """Draws of X_1 + ... + X_n for i.i.d. X_i ~ d."""
    if d.family == "normal-location":
        return n * d.mean + math.sqrt(n) * rng.standard_normal(m)
    if d.family == "poisson":
        return rng.poisson(n * d.params[0], m).astype(float)
    return rng.binomial(n, d.params[0], m).astype(float)


_SUFFICIENT = ("normal-location", "poisson", "bernoulli")


def _lr_rejections(true: list, p0: list, p1: list, replicates: int, rng) -> int:
    """Count of {sum_i log(p1/p0)(X_i) > 0} with X_i drawn from ``true``."""
    iid = all(t is true[0] for t in true) and all(a is p0[0] for a in p0) and all(b is p1[0] for b in p1)
    if iid and {true[0].family, p0[0].family, p1[0].family} <= set(_SUFFICIENT) and \
            len({true[0].family, p0[0].family, p1[0].family}) == 1 and \
            all(0 < d.params[0] < 1 for d in (true[0], p0[0], p1[0]) if d.family == "bernoulli"):
        # the log ratio depends on the data only through the sum
        (e0, a0), (e1, a1) = _natural(p0[0]), _natural(p1[0])
        n = len(true)
        total = _sum_sample(true[0], n, rng, replicates)
        return int(np.count_nonzero((e1 - e0) * total - n * (a1 - a0) > 0))
    hits = 0
    per_chunk = max(1, CHUNK * 10 // max(len(true), 1))
    for start in range(0, replicates, per_chunk):
        m = min(per_chunk, replicates - start)
        llr = np.zeros(m)
        for t, a, b in zip(true, p0, p1):
            x = t.sample(rng, m)
            llr += _log_pdf(b, x) - _log_pdf(a, x)
        hits += int(np.count_nonzero(llr > 0))
    return hits


def _shift_by_hellinger(d: dv.Density, h2: float) -> list:
    """Members of d's family at squared Hellinger distance h2 from d (both sides where possible)."""
    if d.family == "normal-location":
        delta = math.sqrt(-8 * math.log1p(-h2 / 2))
        return [dv.normal_location(d.mean + s * delta) for s in (-1, 1)]
    if d.family == "poisson":
        step = math.sqrt(-2 * math.log1p(-h2 / 2))
        roots = [math.sqrt(d.params[0]) + s * step for s in (-1, 1)]
        return [dv.poisson(r * r) for r in roots if r > 0]
    if d.family == "bernoulli":
        p = d.params[0]
        g = lambda q: float(dv.bernoulli_hellinger_sq(q, p)) - h2
        return [dv.bernoulli(optimize.brentq(g, *sorted((p, end)))) for end in (0.0, 1.0) if g(end) >= 0]
    raise ValueError(f"no default alternatives for family {d.family!r}")


def product_alternatives(p0: dv.Density, p1: dv.Density) -> list:
    """theta1 and its family neighbours at Hellinger distance h(p0, p1)/18."""
    h = math.sqrt(dv.hellinger_sq(p0, p1))
    return [p1] + _shift_by_hellinger(p1, (h / 18) ** 2)


def product_lr_test(p0: Components, p1: Components, n: int, replicates: int = 10**5, seed=None,
                    alternatives: Optional[Sequence[Components]] = None) -> TestReport:
    """Likelihood-ratio test of two product laws.

    Both error frequencies are compared with exp(-n d_n^2 / 2), d_n the root
    average squared Hellinger distance.  Alternatives default to theta1 and
    its one-parameter neighbours at d_n / 18 (i.i.d. components only).
    """
    c0, c1 = _as_list(p0, n), _as_list(p1, n)
    dn = dv.avg_hellinger_dn([dv.ComponentPair(a, b) for a, b in zip(c0, c1)])
    if dn == 0:
        raise ValueError("the two product laws coincide")
    if alternatives is None:
        if not isinstance(p0, dv.Density) or not isinstance(p1, dv.Density):
            raise ValueError("pass alternatives explicitly for non-identical components")
        alternatives = product_alternatives(p0, p1)
    alts = [_as_list(a, n) for a in alternatives]
    for a in alts:
        if dv.avg_hellinger_dn([dv.ComponentPair(x, y) for x, y in zip(a, c1)]) > dn / 18 * (1 + 1e-9):
            raise ValueError("alternatives must lie within d_n/18 of theta1")
    rng = make_rng(seed)
    t1, se1 = _freq(_lr_rejections(c0, c0, c1, replicates, rng), replicates)
    worst, worst_se = 0.0, 0.0
    for a in alts:
        p, se = _freq(replicates - _lr_rejections(a, c0, c1, replicates, rng), replicates)
        if p >= worst:
            worst, worst_se = p, se
    bound = math.exp(-0.5 * n * dn * dn)
    return TestReport(n, dn, t1, se1, bound, worst, worst_se, bound, replicates, c0[0].family)


# -- aggregated tests over shells --------------------------------------------------------

@dataclass
class AggregateReport:
    type1: float
    type1_se: float
    type1_accounting: float
    series_bound: float
    shells: list = field(default_factory=list)
    net_sizes: list = field(default_factory=list)

    def to_json(self) -> str:
        out = asdict(self)
        out["shells"] = [asdict(s) for s in self.shells]
        return json.dumps(out)


def aggregate_test(theta0, nets: Sequence, n: float, replicates: int = 10**5, seed=None) -> AggregateReport:
    """Maximum of the white-noise point tests over a union of shell nets.

    Type I is estimated directly and also accounted as the sum of the
    per-point type I frequencies computed on the same simulated data; the
    series bound sums the Gaussian per-point bounds.  Each shell reports its
    worst type II over the quarter balls around its net points.
    """
    theta0 = np.asarray(theta0, float)
    nets = [np.atleast_2d(np.asarray(net, float)) for net in nets]
    if not nets or any(net.shape[0] == 0 for net in nets):
        raise ValueError("every shell needs a nonempty net")
    points = np.concatenate(nets)
    diff = points - theta0
    cut = np.sum(points**2, axis=1) - theta0 @ theta0
    rng = make_rng(derive_seed(0 if seed is None else seed, "type1"))
    any_hits = 0
    per_point = np.zeros(points.shape[0])
    for start in range(0, replicates, CHUNK):
        m = min(CHUNK, replicates - start)
        x = theta0 + rng.standard_normal((m, theta0.size)) / math.sqrt(n)
        reject = 2 * (x @ diff.T) > cut
        any_hits += int(np.count_nonzero(reject.any(axis=1)))
        per_point += reject.sum(axis=0)
    t1, se1 = _freq(any_hits, replicates)
    accounting = float(math.fsum(per_point / replicates))
    dist = np.linalg.norm(diff, axis=1)
    series = float(np.sum(stats.norm.sf(math.sqrt(n) * dist / 2)))
    shells, offset = [], 0
    for j, net in enumerate(nets):
        worst, worst_se, bound = 0.0, 0.0, 0.0
        for i, theta1 in enumerate(net):
            sub = make_rng(derive_seed(0 if seed is None else seed, "shell", j, i))
            for alt in default_alternatives(theta0, theta1, 4, sub):
                # the combined test accepts only if every point test accepts
                hits = 0
                for start in range(0, replicates, CHUNK):
                    m = min(CHUNK, replicates - start)
                    x = alt + sub.standard_normal((m, theta0.size)) / math.sqrt(n)
                    hits += int(np.count_nonzero(~(2 * (x @ diff.T) > cut).any(axis=1)))
                p, se = _freq(hits, replicates)
                if p >= worst:
                    worst, worst_se = p, se
            bound = max(bound, float(stats.norm.sf(math.sqrt(n) * np.linalg.norm(theta1 - theta0) / 4)))
        d_min = float(dist[offset:offset + net.shape[0]].min())
        shells.append(TestReport(int(n), d_min, float(per_point[offset:offset + net.shape[0]].sum() / replicates), 0.0,
                                 float(np.sum(stats.norm.sf(math.sqrt(n) * dist[offset:offset + net.shape[0]] / 2))),
                                 worst, worst_se, bound, replicates, f"shell {j + 1}"))
        offset += net.shape[0]
    return AggregateReport(t1, se1, accounting, series, shells, [net.shape[0] for net in nets])


def shell_nets(theta0, eps: float, shells: int = 3, dim: int = 2, candidates: int = 2000, seed=None) -> list:
    """Greedy nets of the shells {j eps < |theta - theta0| <= (j + 1) eps} at radius j eps / 4."""
    theta0 = np.asarray(theta0, float)
    rng = make_rng(seed)
    nets = []
    for j in range(1, shells + 1):
        u = rng.standard_normal((candidates, dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        r = eps * (j + rng.random(candidates))
        cloud = theta0 + r[:, None] * u
        idx = greedy_cover(PointCloud(cloud), j * eps / 4)
        nets.append(cloud[idx])
    return nets


# -- evidence lower bound --------------------------------------------------------------

@dataclass
class EvidenceReport:
    frequency: float
    standard_error: float
    bound: float
    n_eps_sq: float
    acceptance: float
    replicates: int

    @property
    def within_bound(self) -> bool:
        return self.frequency <= self.bound + 4 * self.standard_error

    def to_json(self) -> str:
        out = asdict(self)
        out["within_bound"] = self.within_bound
        return json.dumps(out)


def restricted_prior_draws(theta0, n: float, eps: float, k: int = 2, draws: int = 2000, seed=None,
                           proposal_scale: Optional[float] = None, max_proposals: int = 10**6) -> tuple:
    """Rejection draws from N(theta0, s^2 I) restricted to the Kullback-Leibler neighbourhood.

    In the white-noise model K = n|d|^2/2 and the centred k-th moment of the
    log ratio is E|N(0, n|d|^2)|^k, so membership reduces to a ball in d.
    Returns (draws, acceptance rate).
    """
    theta0 = np.asarray(theta0, float)
    s = eps / math.sqrt(theta0.size) if proposal_scale is None else proposal_scale
    rng = make_rng(seed)
    target = n * eps * eps
    abs_moment = 2 ** (k / 2) * special.gamma((k + 1) / 2) / math.sqrt(math.pi)
    kept, proposed = [], 0
    while sum(len(a) for a in kept) < draws and proposed < max_proposals:
        prop = theta0 + s * rng.standard_normal((CHUNK, theta0.size))
        proposed += CHUNK
        sq = np.sum((prop - theta0) ** 2, axis=1)
        ok = (0.5 * n * sq <= target) & (abs_moment * (n * sq) ** (k / 2) <= target ** (k / 2))
        kept.append(prop[ok])
    sample = np.concatenate(kept)[:draws]
    accepted = sum(len(a) for a in kept)
    if accepted == 0:
        raise ValueError("restricted prior is empty: no proposal fell in the neighbourhood")
    return sample, accepted / proposed


def evidence_bound_check(theta0, n: float, eps: float, C: float = 1.0, k: int = 2, replicates: int = 10**5,
                         seed=None, prior_draws=None, draws: int = 2000) -> EvidenceReport:
    """Frequency of {int p_theta/p_theta0 dPi <= exp(-(1 + C) n eps^2)} under theta0.

    The integral is a Monte Carlo average over ``prior_draws`` (rows of
    parameters), by default rejection draws from the restricted prior.
    The bound is 1 / (C^k (n eps^2)^(k/2)).
    """
    theta0 = np.asarray(theta0, float)
    if prior_draws is None:
        prior_draws, acceptance = restricted_prior_draws(theta0, n, eps, k, draws, derive_seed(seed or 0, "prior"))
    else:
        prior_draws, acceptance = np.atleast_2d(np.asarray(prior_draws, float)), 1.0
    if prior_draws.shape[0] == 0:
        raise ValueError("restricted prior is empty")
    rng = make_rng(derive_seed(seed or 0, "data"))
    diff = prior_draws - theta0
    # log p_theta/p_theta0 (X) = n <X - theta0, d> - n |d|^2 / 2
    offset = -0.5 * n * np.sum(diff**2, axis=1)
    level = -(1 + C) * n * eps * eps
    hits = 0
    per_chunk = max(1, 2 * 10**6 // prior_draws.shape[0])
    for start in range(0, replicates, per_chunk):
        m = min(per_chunk, replicates - start)
        z = rng.standard_normal((m, theta0.size)) / math.sqrt(n)
        log_ratio = n * (z @ diff.T) + offset
        log_evidence = special.logsumexp(log_ratio, axis=1) - math.log(prior_draws.shape[0])
        hits += int(np.count_nonzero(log_evidence <= level))
    p, se = _freq(hits, replicates)
    bound = 1.0 / (C**k * (n * eps * eps) ** (k / 2))
    return EvidenceReport(p, se, bound, n * eps * eps, acceptance, replicates)


# -- canned suites ---------------------------------------------------------------------

MATRIX_FAMILIES = {
    "normal": lambda s: (dv.normal_location(0.0), dv.normal_location(s)),
    "poisson": lambda s: (dv.poisson(2.0), dv.poisson(2.0 + 2 * s)),
    "bernoulli": lambda s: (dv.bernoulli(0.5), dv.bernoulli(0.5 + 0.45 * s)),
}
MATRIX_SIZES = (20, 50, 100)
MATRIX_SEPARATIONS = (0.2, 0.5, 0.9)
SUITES = ("lemma5", "lemma2", "lemma9", "lemma10")


def run_suite(name: str, replicates: int = 10**5, seed: int = 0):
    """Yield the reports of a canned test suite, one per configuration."""
    if name == "lemma5":
        for i, (n, sep) in enumerate([(25, 0.6), (100, 0.4), (400, 0.3)]):
            theta1 = np.array([sep, 0.0, 0.0])
            yield whitenoise_lr_test(np.zeros(3), theta1, n, replicates, derive_seed(seed, name, i))
    elif name == "lemma2":
        for family, build in MATRIX_FAMILIES.items():
            for n in MATRIX_SIZES:
                for sep in MATRIX_SEPARATIONS:
                    p0, p1 = build(sep)
                    r = product_lr_test(p0, p1, n, replicates, derive_seed(seed, name, family, n, str(sep)))
                    r.label = f"{family} sep={sep}"
                    yield r
    elif name == "lemma9":
        theta0 = np.zeros(2)
        for i, eps in enumerate((0.2, 0.3)):
            nets = shell_nets(theta0, eps, 3, 2, 2000, derive_seed(seed, name, "nets", i))
            yield aggregate_test(theta0, nets, 100, replicates, derive_seed(seed, name, i))
    elif name == "lemma10":
        theta0 = np.array([1.0, 0.25, 1 / 9])
        n = 100
        for n_eps_sq in (4, 16, 64):
            yield evidence_bound_check(theta0, n, math.sqrt(n_eps_sq / n), 1.0, 2, replicates,
                                       derive_seed(seed, name, n_eps_sq))
    else:
        raise ValueError(f"unknown suite {name!r}; known: {SUITES}")
