"""Command-line entry point: ``slicelab {run,estimate,profile-covering,table-bq}``."""

from __future__ import annotations

import argparse
import json
import os
import sys

from .bodies import body_from_config
from .centroid import zq_radius, zq_support, zq_width
from .covering import regularity_profile
from .functionals import kstar, qstar, radial_moment, slicing_parameter
from .isotropy import isotropic_constant
from .runner import ConfigError, ExperimentConfig, bq_gamma_tables, emit, run_suite

QUANTITIES = ("L", "I1", "Iq", "h", "R", "width", "qstar", "kstar")


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    return cfg


def _formats(args, cfg):
    if args.format:
        return [f.strip() for f in args.format.split(",") if f.strip()]
    return cfg.output.get("formats", ["csv", "json"])


def _out(args, cfg):
    return args.out or cfg.output.get("path", "out")


def _body(args):
    cfg = {"shape": args.body, "n": args.n}
    if args.p is not None:
        cfg["p"] = args.p
    return body_from_config(cfg)


def cmd_run(args) -> int:
    cfg = _config(args)
    report = run_suite(cfg)
    for path in emit(report, _out(args, cfg), _formats(args, cfg)):
        print(path)
    s = report.summary
    print(f"PASS {s['PASS']}  FAIL {s['FAIL']}  REPORT {s['REPORT']}  SKIP {s['SKIP']}")
    return 1 if report.failed else 0


def cmd_table_bq(args) -> int:
    cfg = _config(args)
    report = bq_gamma_tables(cfg)
    for path in emit(report, _out(args, cfg), _formats(args, cfg), stem="bq_gamma"):
        print(path)
    return 1 if report.failed else 0


def cmd_estimate(args) -> int:
    K = _body(args)
    seed = args.seed or 0
    q, n = args.q, args.n
    if args.quantity == "L":
        est = isotropic_constant(K, args.budget, seed, args.threads or 1)
    elif args.quantity == "I1":
        est = slicing_parameter(K, K, q, seed=seed, threads=args.threads or 1)
    elif args.quantity == "Iq":
        est = radial_moment(K, q, args.budget, seed)
    elif args.quantity == "h":
        y = [1.0] + [0.0] * (n - 1)
        est = zq_support(K, q, y, args.budget, seed)
    elif args.quantity == "R":
        est, _ = zq_radius(K, q, budget=args.budget, seed=seed)
    elif args.quantity == "width":
        est = zq_width(K, q, q, budget=args.budget, seed=seed).estimate
    elif args.quantity == "qstar":
        res = qstar(K, budget=args.budget, seed=seed)
        print(json.dumps({"quantity": "qstar", "value": res.value, "table": [list(r) for r in res.table]}))
        return 0
    else:
        from .centroid import ZqEvaluator
        ev = ZqEvaluator.for_body(K, q, args.budget, seed)
        res = kstar(ev, n, seed=seed)
        print(json.dumps({"quantity": "kstar", "value": res.value, "width": res.width.value, "radius": res.radius}))
        return 0
    print(json.dumps({"quantity": args.quantity, "body": args.body, "n": n, "q": q, **est.to_dict()}))
    return 0


def cmd_profile_covering(args) -> int:
    K = _body(args)
    prof = regularity_profile(K, args.kappa, args.tau, seed=args.seed or 0, threads=args.threads or 1,
                              sample_size=args.sample)
    text = prof.to_csv()
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, f"covering_{args.body}_{args.n}.csv")
        with open(path, "w", newline="") as fh:
            fh.write(text)
        print(path)
    else:
        sys.stdout.write(text)
    print(f"# kappa_fit={prof.kappa_fit} range_empty={prof.range_empty} regular={prof.regular}", file=sys.stderr)
    print(f"# {prof.caveat}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="base seed (unsigned 64-bit)")
    common.add_argument("--threads", type=int, help="worker threads")
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", help="comma-separated formats: csv,json,plot")

    body = argparse.ArgumentParser(add_help=False)
    body.add_argument("--body", default="cube", choices=["cube", "ball", "cross", "lp", "simplex"])
    body.add_argument("--n", type=int, default=2)
    body.add_argument("--p", type=float, help="exponent of the lp ball")

    parser = argparse.ArgumentParser(prog="slicelab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run the audit suites").set_defaults(func=cmd_run)
    sub.add_parser("table-bq", parents=[common], help="B(q) / Gamma(q) catalog tables").set_defaults(
        func=cmd_table_bq)
    p = sub.add_parser("estimate", parents=[common, body], help="estimate one functional")
    p.add_argument("quantity", choices=QUANTITIES)
    p.add_argument("--q", type=float, default=2.0)
    p.add_argument("--budget", type=int, default=200_000)
    p.set_defaults(func=cmd_estimate)
    p = sub.add_parser("profile-covering", parents=[common, body], help="covering-number regularity profile")
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--sample", type=int, default=10_000)
    p.set_defaults(func=cmd_profile_covering)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
