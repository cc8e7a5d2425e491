"""Contraction experiments over sample-size grids: running, persisting, fitting rates.

Every (n, replicate) task gets its own seed derived from the master seed, so
results do not depend on scheduling or on the number of worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .priors import SequencePrior
from .seeding import derive_seed, make_rng

COLUMNS = ["model", "n", "replicate", "seed", "quantile", "radius", "mass_outside_2eps",
           "mass_outside_5eps", "ess", "elapsed_ms", "status"]

IS_MODELS = ("binary-dp", "whittle")
IS_NOTE = ("importance-sampling posterior: only the monotone decrease of the radius is checked; "
           "exact rates are not reliably reproducible by prior importance sampling at this scale")


@dataclass
class ExperimentSpec:
    model: str
    n_grid: list
    replicates: int = 5
    posterior_draws: int = 2000
    quantile: float = 0.9
    seed: int = 0
    model_config: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    output: Optional[str] = None

    def __post_init__(self):
        self.n_grid = [int(n) for n in self.n_grid]
        if len(self.n_grid) < 3:
            raise ValueError("need at least three sample sizes")
        if any(n <= 0 for n in self.n_grid) or any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ValueError("sample sizes must be positive and strictly increasing")
        if self.replicates < 5:
            raise ValueError("need at least five replicates")
        if not 0 < self.quantile < 1:
            raise ValueError("quantile must lie in (0, 1)")
        if self.model not in ADAPTERS:
            raise ValueError(f"unknown model {self.model!r}; known: {sorted(ADAPTERS)}")

    @classmethod
    def from_json(cls, text: str, output: Optional[str] = None) -> "ExperimentSpec":
        raw = json.loads(text)
        allowed = {"model", "model_config", "n_grid", "replicates", "posterior_draws", "quantile", "seed",
                   "tolerances"}
        unknown = set(raw) - allowed
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(output=output, **raw)

    @property
    def config(self) -> dict:
        return {**ADAPTERS[self.model].defaults, **self.model_config}

    @property
    def tolerance(self) -> float:
        return float(self.tolerances.get("exponent", ADAPTERS[self.model].tolerance))


# -- model adapters ------------------------------------------------------------------------

@dataclass
class Adapter:
    """Per-model hooks.

    ``run(config, n, rng, draws)`` returns (posterior distance draws,
    importance weights or None, ESS or None); ``eps(config, n)`` is the
    reference radius used for the mass-outside columns.
    """

    run: Callable
    eps: Callable
    theoretical: Callable
    defaults: dict
    tolerance: float


def _freeze(config: dict) -> str:
    return json.dumps(config, sort_keys=True)


def _whitenoise_run(config, n, rng, draws):
    from .models import whitenoise as wn
    alpha = config["alpha"]
    k = wn.default_truncation(n, alpha)
    theta0 = wn.PowerSequence(config["truth_exponent"] - 1, config["truth_scale"])
    data = wn.simulate(theta0, n, config["k_max_factor"] * k, rng)
    prior = SequencePrior.flat(k, alpha) if config["prior"] == "flat" else SequencePrior.power(k, alpha)
    return wn.posterior_distance_draws(data, prior, theta0, draws, rng), None, None


def _spline_run(config, n, rng, draws):
    from .models import regression as rg
    f0 = rg.F0_REGISTRY[config["f0"]]
    J = rg.default_dimension(n, config["alpha"], config["q"], config["dimension_scale"])
    basis = rg.SplineBasis.with_dimension(J, config["q"])
    data = rg.simulate(f0, n, config["sigma"], rng)
    return rg.posterior_distance_draws(data, basis, f0, draws, rng), None, None


def _markov_run(config, n, rng, draws):
    from .models import markov as mk
    M = config["M"]
    f0 = mk.F0_REGISTRY[config["f0"]](M)
    model = mk.AutoregressionModel(f0, M)
    prior = mk.scaled_partition(n, M, config["k_scale"], config["a_scale"])
    data = mk.simulate_chain(model, n, config["burn_in"], rng)
    return mk.posterior_distance_draws(data, prior, f0, M, draws, rng), None, None


def _sieve_truth(config):
    a, b = config["truth_offset"], config["truth_slope"]
    return lambda z: a + b * np.asarray(z, float) ** 2


@lru_cache(maxsize=8)
def _cached_sieve(frozen: str, n: int):
    from .models import inid
    config = json.loads(frozen)
    model = inid.PoissonSieveModel(_sieve_truth(config), config["L"], config["U"], config["mesh_scale"],
                                   config["level_ratio"], config["rate_scale"])
    return model.sieve(n)


def _sieve_run(config, n, rng, draws):
    from .models import inid
    truth = _sieve_truth(config)
    sieve = _cached_sieve(_freeze(config), n)
    data = inid.simulate_counts(truth, inid.uniform_covariates(n), rng)
    return inid.structured_sieve_posterior(sieve, data).sample_distances(truth, draws, rng), None, None


def _binary_run(config, n, rng, draws):
    from .models import inid
    from .priors import StickBreakingDP
    prior = StickBreakingDP(config["mass"], base="logistic", location_range=tuple(config["location_range"]),
                            scale_range=tuple(config["scale_range"]))
    model = inid.BinaryModel(prior=prior)
    data = inid.simulate_binary(model, n, rng)
    post = inid.binary_posterior_is(model, data, max(draws, config["prior_draws"]), rng)
    return inid.binary_distances(post, data, model.link), post.weights, post.ess


def _parametric_run(config, n, rng, draws):
    from .models import inid
    model = inid.ParametricModel(config["family"], config["lo"], config["hi"])
    theta = config["theta0"]
    x = model.simulate(theta, n, rng)
    mesh = config["mesh"] if config.get("mesh") else model.rate(config["mesh_n"]) / 10
    post = inid.grid_posterior(model, x, mesh)
    return np.abs(post.grid - theta), post.probs, None


def _whittle_run(config, n, rng, draws):
    from .models import spectral as sp
    f0 = sp.SpectralDensity.constant(config["f0"])
    prior = sp.whittle_prior(n, config["m"], config["M"])
    x = sp.simulate_gaussian_ts(f0, n, rng)
    post = sp.whittle_posterior_is(x, prior, max(draws, config["prior_draws"]), rng, truth=f0.on_unit)
    return post.distances, post.weights, post.ess


def _parametric_alpha(config):
    return 0.5 if config["family"] == "uniform-endpoint" else 1.0


ADAPTERS = {
    "white-noise": Adapter(
        _whitenoise_run,
        lambda c, n: n ** (-c["alpha"] / (2 * c["alpha"] + 1)),
        lambda c: (-c["alpha"] / (2 * c["alpha"] + 1), 0.0),
        {"alpha": 1.0, "truth_exponent": 2.0, "truth_scale": 1.0, "prior": "flat", "k_max_factor": 4},
        0.08),
    "spline-regression": Adapter(
        _spline_run,
        lambda c, n: n ** (-c["alpha"] / (1 + 2 * c["alpha"])),
        lambda c: (-c["alpha"] / (1 + 2 * c["alpha"]), 0.0),
        {"alpha": 2.0, "q": 3, "f0": "sin2pi", "sigma": 1.0, "dimension_scale": 2.0},
        0.08),
    "nl-autoregression": Adapter(
        _markov_run,
        lambda c, n: n ** (-1 / 3) * math.sqrt(math.log(n)),
        lambda c: (-1 / 3, 0.5),
        {"M": 1.0, "f0": "tanh-scaled", "k_scale": 3.0, "a_scale": 3.0, "burn_in": 1000},
        0.12),
    "poisson-sieve": Adapter(
        _sieve_run,
        lambda c, n: c["rate_scale"] * n ** (-1 / 3),
        lambda c: (-1 / 3, 0.0),
        {"L": 1.0, "U": 3.0, "truth_offset": 1.0, "truth_slope": 2.0, "mesh_scale": 2.0, "level_ratio": 1.5,
         "rate_scale": 0.085},
        0.12),
    "binary-dp": Adapter(
        _binary_run,
        lambda c, n: n ** (-1 / 3) * math.log(n) ** (1 / 3),
        lambda c: (-1 / 3, 1 / 3),
        {"mass": 10.0, "location_range": [0.0, 1.0], "scale_range": [0.1, 0.5], "prior_draws": 10**4},
        0.15),
    "parametric-grid": Adapter(
        _parametric_run,
        lambda c, n: n ** (-1 / (2 * _parametric_alpha(c))),
        lambda c: (-1 / (2 * _parametric_alpha(c)), 0.0),
        {"family": "uniform-endpoint", "theta0": 1.0, "lo": 0.5, "hi": 2.0, "mesh": None, "mesh_n": 3200},
        0.15),
    "whittle": Adapter(
        _whittle_run,
        lambda c, n: n ** (-1 / 3) * math.log(n) ** (1 / 3),
        lambda c: (-1 / 3, 1 / 3),
        {"f0": 1 / (2 * math.pi), "m": 0.05, "M": 0.5, "prior_draws": 10**4},
        0.15),
}


def theoretical_rate(model: str, params: Optional[dict] = None) -> tuple[float, float]:
    """(polynomial exponent, log power) of the reference rate."""
    if model not in ADAPTERS:
        raise ValueError(f"unknown model {model!r}")
    return ADAPTERS[model].theoretical({**ADAPTERS[model].defaults, **(params or {})})


# -- running ---------------------------------------------------------------------------------

def _weighted_quantile(values, weights, q):
    if weights is None:
        return float(np.quantile(values, q))
    order = np.argsort(values, kind="stable")
    cw = np.cumsum(np.asarray(weights)[order])
    return float(np.asarray(values)[order][min(np.searchsorted(cw, q * cw[-1]), len(cw) - 1)])


def _mass_outside(values, weights, r):
    if weights is None:
        return float(np.mean(values >= r))
    return float(np.sum(np.asarray(weights)[values >= r]))


def _task(args):
    model, config, n_index, n, replicate, master, draws, q, timing = args
    seed = derive_seed(master, model, n_index, replicate)
    row = {"model": model, "n": n, "replicate": replicate, "seed": seed, "quantile": q, "radius": None,
           "mass_outside_2eps": None, "mass_outside_5eps": None, "ess": None, "elapsed_ms": None, "status": "ok"}
    start = time.perf_counter()
    try:
        adapter = ADAPTERS[model]
        dist, weights, ess = adapter.run(config, n, make_rng(seed), draws)
        eps = adapter.eps(config, n)
        row.update(radius=_weighted_quantile(dist, weights, q),
                   mass_outside_2eps=_mass_outside(dist, weights, 2 * eps),
                   mass_outside_5eps=_mass_outside(dist, weights, 5 * eps), ess=ess)
        if ess is not None and ess < 50:
            row["status"] = "low-ess"
    except Exception as exc:  # recorded per row, the run continues
        row["status"] = f"error: {type(exc).__name__}: {exc}".replace("\n", " ")
    if timing:
        row["elapsed_ms"] = round(1000 * (time.perf_counter() - start), 3)
    return row


def run_experiment(spec: ExperimentSpec, workers: int = 1, timing: bool = False) -> list[dict]:
    """One row per (n, replicate), sorted by (n, replicate)."""
    config = spec.config
    tasks = [(spec.model, config, i, n, r, spec.seed, spec.posterior_draws, spec.quantile, timing)
             for i, n in enumerate(spec.n_grid) for r in range(spec.replicates)]
    if workers <= 1:
        rows = [_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_task, tasks))
    rows.sort(key=lambda row: (row["n"], row["replicate"]))
    if spec.output:
        write_csv(rows, spec.output)
    return rows


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in COLUMNS])
    return buf.getvalue()


def write_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(rows_to_csv(rows))


def read_csv(path) -> list[dict]:
    out = []
    with open(path, newline="") as fh:
        for raw in csv.DictReader(fh):
            row = dict(raw)
            for key in ("n", "replicate", "seed"):
                row[key] = int(row[key])
            for key in ("quantile", "radius", "mass_outside_2eps", "mass_outside_5eps", "ess", "elapsed_ms"):
                row[key] = float(row[key]) if row[key] not in ("", None) else None
            out.append(row)
    return out


# -- rate fitting ------------------------------------------------------------------------------

@dataclass
class RateFit:
    exponent: float
    intercept: float
    log_coeff: Optional[float]
    ci_lo: float
    ci_hi: float
    residual_rms: float
    n_values: list = field(default_factory=list)
    medians: list = field(default_factory=list)
    means: list = field(default_factory=list)
    verdict: Optional[str] = None

    def to_json(self) -> str:
        keys = ("exponent", "intercept", "log_coeff", "ci_lo", "ci_hi", "residual_rms", "verdict")
        return json.dumps({k: getattr(self, k) for k in keys})


def _ols(ns, medians, with_log_term):
    cols = [np.ones(len(ns)), np.log(ns)]
    if with_log_term:
        cols.append(np.log(np.log(ns)))
    X = np.column_stack(cols)
    y = np.log(medians)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    return coef, float(math.sqrt(np.mean(resid * resid)))


def _grouped(rows):
    groups = {}
    for row in rows:
        if row.get("status", "ok") in ("ok", "low-ess") and row.get("radius") is not None:
            groups.setdefault(int(row["n"]), []).append(float(row["radius"]))
    return dict(sorted(groups.items()))


def fit_rate(rows, with_log_term: bool = False, include_smallest: bool = False, bootstrap: int = 200,
             seed: int = 0) -> RateFit:
    """Least squares of log median radius on log n (and log log n).

    The confidence interval is the 5%-95% range of the exponent over
    bootstrap resamples of the replicates within each n.
    """
    groups = _grouped(rows)
    if len(groups) < 3:
        raise ValueError("need at least three distinct sample sizes")
    if not include_smallest:
        groups = dict(list(groups.items())[1:])
    if with_log_term and len(groups) < 3:
        raise ValueError("the log term needs three fitted sample sizes")
    ns = np.array(list(groups), dtype=float)
    radii = [np.asarray(v) for v in groups.values()]
    medians = np.array([np.median(v) for v in radii])
    if np.any(medians <= 0):
        raise ValueError("median radius must be positive for a log-log fit")
    coef, rms = _ols(ns, medians, with_log_term)
    rng = np.random.default_rng(seed)
    boot = []
    for _ in range(bootstrap):
        meds = np.array([np.median(rng.choice(v, v.size)) for v in radii])
        if np.all(meds > 0):
            boot.append(_ols(ns, meds, with_log_term)[0][1])
    lo, hi = (np.quantile(boot, [0.05, 0.95]) if boot else (coef[1], coef[1]))
    return RateFit(float(coef[1]), float(coef[0]), float(coef[2]) if with_log_term else None,
                   float(min(lo, coef[1])), float(max(hi, coef[1])), rms, ns.astype(int).tolist(), medians.tolist(),
                   [float(np.mean(v)) for v in radii])


# -- verdicts ------------------------------------------------------------------------------------

def verdict(fit: RateFit, theoretical: float, tolerance: float) -> str:
    """INCONCLUSIVE when the interval is wider than the tolerance, else PASS iff the exponent is within it."""
    if fit.ci_hi - fit.ci_lo > tolerance:
        return "INCONCLUSIVE"
    return "PASS" if abs(fit.exponent - theoretical) <= tolerance else "FAIL"


def property_verdict(rows, min_ess: float = 50.0, min_fraction: float = 0.8) -> tuple[str, dict]:
    """Monotone decrease of the median radius with ESS >= min_ess on enough replicates."""
    groups = _grouped(rows)
    medians = [float(np.median(v)) for v in groups.values()]
    ess = [row.get("ess") for row in rows]
    good = [e is not None and e >= min_ess for e in ess]
    fraction = float(np.mean(good)) if good else 0.0
    monotone = all(b < a for a, b in zip(medians, medians[1:]))
    details = {"medians": medians, "n": list(groups), "ess_fraction": fraction, "monotone": monotone}
    return ("PASS" if monotone and fraction >= min_fraction else "FAIL"), details


def report(rows, model: str, params: Optional[dict] = None, tolerance: Optional[float] = None,
           with_log_term: bool = False) -> dict:
    """Verdict record comparing the fitted exponent with the reference rate."""
    exponent, log_power = theoretical_rate(model, params)
    tol = ADAPTERS[model].tolerance if tolerance is None else tolerance
    fit = fit_rate(rows, with_log_term)
    out = {"model": model, "theoretical_exponent": exponent, "theoretical_log_power": log_power,
           "tolerance": tol, "fit": json.loads(fit.to_json()), "rows": len(rows),
           "errors": sum(1 for r in rows if str(r.get("status", "ok")).startswith("error"))}
    if model in IS_MODELS:
        v, details = property_verdict(rows)
        out.update(verdict=v, property=details, note=IS_NOTE)
    else:
        out["verdict"] = verdict(fit, exponent, tol)
    out["fit"]["verdict"] = out["verdict"]
    return out
