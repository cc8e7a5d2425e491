"""Command-line entry point: ``contraction <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import covering as cv
from . import divergences as dv
from . import harness as hv
from . import lrtests as lt

MEASURES = {
    "hellinger2": dv.hellinger_sq,
    "kl": dv.kl,
    "v2": lambda p, q: dv.v_k(p, q, 2),
    "v20": lambda p, q: dv.v_k0(p, q, 2),
}


def _density(family: str, text: str) -> dv.Density:
    if family == "grid":
        raise SystemExit("grid densities are not available from the command line")
    params = tuple(float(v) for v in text.split(","))
    return dv.Density(family, params)


def _cmd_divergence(args) -> int:
    value = MEASURES[args.measure](_density(args.family, args.p), _density(args.family, args.q))
    print("inf" if math.isinf(value) else repr(float(value)))
    return 0


def _cmd_cover(args) -> int:
    eps = args.eps
    if args.cls == "interval":
        count = cv.cover_interval(eps, args.a, args.b)
        report = cv.CoverReport("interval", eps, count, math.log(count), notes="exact count")
    elif args.cls == "ball":
        rng = np.random.default_rng(args.seed)
        u = rng.standard_normal((args.points, args.dim))
        u *= (args.radius * rng.random(args.points) ** (1 / args.dim) / np.linalg.norm(u, axis=1))[:, None]
        count = len(cv.greedy_cover(cv.PointCloud(u), eps))
        report = cv.CoverReport("ball", eps, count, cv.euclidean_ball_cover_bound(args.dim, args.radius, eps),
                                notes=f"greedy cover of {args.points} uniform points in the ball")
    elif args.cls == "monotone":
        br = cv.monotone_class_entropy(eps, args.grid_size)
        report = _bracket_report("monotone", eps, br.log_count, 1 / eps)
    else:
        z = (np.arange(args.n) + 0.5) / args.n
        sieve = cv.poisson_bracketing(eps, args.lower, args.upper, z)
        report = _bracket_report("poisson-sieve", eps, sieve.log_count, (args.upper - args.lower) / eps)
    print(report.to_json())
    return 0


def _bracket_report(cls: str, eps: float, log_count: float, target: float) -> cv.CoverReport:
    count = round(math.exp(log_count)) if log_count < 700 else int(10**300)
    return cv.CoverReport(cls, eps, max(1, count), target, log_count=log_count,
                          notes="theoretical_bound is the C/eps shape with C = 1; compare slopes, not constants")


def _cmd_tests(args) -> int:
    for r in lt.run_suite(args.suite, args.replicates, args.seed):
        print(r.to_json(), flush=True)
    return 0


def _cmd_run(args) -> int:
    spec = hv.ExperimentSpec.from_json(Path(args.config).read_text())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec.output = str(out / "results.csv")
    rows = hv.run_experiment(spec, workers=args.workers, timing=args.timing)
    errors = sum(1 for r in rows if r["status"].startswith("error"))
    print(json.dumps({"rows": len(rows), "errors": errors, "csv": spec.output}))
    return 0


def _cmd_rates(args) -> int:
    fit = hv.fit_rate(hv.read_csv(args.input), with_log_term=args.log_term, include_smallest=args.include_smallest)
    print(fit.to_json())
    return 0


def _cmd_report(args) -> int:
    rows = hv.read_csv(args.input)
    out = hv.report(rows, args.model, tolerance=args.tolerance)
    print(json.dumps(out))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contraction", description="Posterior contraction experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("divergence", help="divergence between two densities of one family")
    p.add_argument("--family", required=True, choices=[f for f in dv.FAMILIES if f != "grid"])
    p.add_argument("--p", required=True, help="comma-separated parameters")
    p.add_argument("--q", required=True, help="comma-separated parameters")
    p.add_argument("--measure", required=True, choices=sorted(MEASURES))
    p.set_defaults(func=_cmd_divergence)

    p = sub.add_parser("cover", help="covering or bracketing count as JSON")
    p.add_argument("--class", dest="cls", required=True, choices=["interval", "ball", "monotone", "poisson-sieve"])
    p.add_argument("--eps", required=True, type=float)
    p.add_argument("--a", type=float, default=0.0)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--points", type=int, default=2000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--grid-size", type=int, default=64)
    p.add_argument("--n", type=int, default=100, help="number of equally spaced covariates")
    p.add_argument("--lower", type=float, default=1.0)
    p.add_argument("--upper", type=float, default=3.0)
    p.set_defaults(func=_cmd_cover)

    p = sub.add_parser("tests", help="likelihood-ratio test suites")
    tsub = p.add_subparsers(dest="action", required=True)
    t = tsub.add_parser("run")
    t.add_argument("--suite", required=True, choices=lt.SUITES)
    t.add_argument("--replicates", type=int, default=10**5)
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(func=_cmd_tests)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timing", action="store_true", help="fill elapsed_ms (breaks byte-identical output)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("rates", help="rate fitting")
    rsub = p.add_subparsers(dest="action", required=True)
    r = rsub.add_parser("fit")
    r.add_argument("--in", dest="input", required=True)
    r.add_argument("--log-term", action="store_true")
    r.add_argument("--include-smallest", action="store_true")
    r.set_defaults(func=_cmd_rates)

    p = sub.add_parser("report", help="verdict against the reference rate")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model", required=True, choices=sorted(hv.ADAPTERS))
    p.add_argument("--tolerance", type=float, default=None)
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
