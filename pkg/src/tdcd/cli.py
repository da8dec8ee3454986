"""Command-line entry point: ``tdcd {run,sweep,gen-data,check,version}``.

Exit codes: 0 success, 1 configuration error, 2 divergence, 3 failed check.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__, benchmarks, oracles
from .config import load_config
from .data import write_binary, write_csv
from .errors import ConfigError, DivergenceError, NumericError
from .experiments import AXES, grid_search_lr, load_data, run_experiment, sweep
from .models import ARCHITECTURES, LOSS_KINDS
from .synthetic import SyntheticSpec, generate_synthetic

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_CHECK = 0, 1, 2, 3


def _parse_values(text: str) -> list:
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        try:
            out.append(int(tok))
        except ValueError:
            try:
                out.append(float(tok))
            except ValueError:
                raise ConfigError(f"cannot parse sweep value {tok!r}") from None
    return out


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    res = run_experiment(cfg, args.out)
    if res.error is not None:
        print(f"error: {res.error}", file=sys.stderr)
        return EXIT_DIVERGED
    print(f"final loss {res.trace.final_loss!r} at clock {res.trace.final.clock!r}; wrote {args.out}")
    if res.bound is not None:
        print(f"bound: lhs {res.bound.lhs:.6g} rhs {res.bound.rhs:.6g} satisfied={res.bound.satisfied}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    values = _parse_values(args.values)
    if args.grid:
        if AXES.get(args.axis) != "lr":
            raise ConfigError("--grid applies to the learning-rate axis (eta)")
        budget = args.budget_iters or cfg.search.budget_iters or cfg.total_iterations
        best, rows = grid_search_lr(cfg, values, budget, args.out)
        print(f"selected lr {best!r}")
    else:
        rows = sweep(cfg, args.axis, values, args.out, target_loss=args.target)
    for row in rows:
        print(" ".join(f"{k}={v}" for k, v in row.items()))
    return EXIT_OK


def cmd_gen_data(args) -> int:
    spec = SyntheticSpec(
        n_samples=args.n_samples,
        n_features=args.n_features,
        task=args.task,
        noise=args.noise,
        margin=args.margin,
        condition=args.condition,
        n_test=args.n_test,
    )
    train, test, _ = generate_synthetic(spec, args.seed)
    out = Path(args.out)
    writer = write_csv if args.format == "csv" else write_binary
    writer(out, train)
    if test is not None:
        writer(out.with_name(out.stem + "_test" + out.suffix), test)
    print(f"wrote {train.n_samples} x {train.n_features} to {out}")
    return EXIT_OK


def cmd_check(args) -> int:
    failures = 0

    def report(name: str, ok: bool, detail: str) -> None:
        nonlocal failures
        failures += not ok
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")

    for arch in ARCHITECTURES:
        for kind in LOSS_KINDS:
            err = oracles.gradient_check(arch, kind, n_probes=args.probes)
            report(f"gradient {arch}/{kind}", err < 1e-5, f"max relative error {err:.2e}")

    if args.config:
        if not args.reduction:
            raise ConfigError("--config needs --reduction")
        cfg = load_config(args.config)
        r = oracles.reduction_check(args.reduction, cfg, load_data(cfg)[0])
        report(f"reduction {args.reduction}", r.passed, f"deviation {r.max_deviation:.2e}")
    else:
        base = benchmarks.analytic_quadratic(**{"dataset.n_samples": 64, "batch_size": 64})
        data = benchmarks._dataset(base)
        cases = {
            "Q1_centralized": base,
            "N1_local_sgd": base.replace(n_silos=1, clients=4, local_steps=5, batch_size=16),
            "K1_vfl": base.replace(clients=1, local_steps=5, batch_size=16),
        }
        for kind, cfg in cases.items():
            r = oracles.reduction_check(kind, cfg, data)
            report(f"reduction {kind}", r.passed, f"deviation {r.max_deviation:.2e}")

    quad = benchmarks.analytic_quadratic()
    reports = benchmarks.bound_grid(quad, local_steps=(1, 2), fractions=(1.0, 0.5), seeds=range(3))
    ok = all(r.satisfied for r in reports)
    worst = max(r.lhs / r.rhs for r in reports)
    report("convergence bound", ok, f"{len(reports)} settings, max lhs/rhs {worst:.3f}")
    return EXIT_OK if failures == 0 else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tdcd", description="Tiered decentralized coordinate descent simulator")
    p.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="train one configuration and write its artifacts")
    r.add_argument("config")
    r.add_argument("--out", required=True, help="output directory")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="vary one field of a configuration")
    s.add_argument("config")
    s.add_argument("--axis", required=True, choices=sorted(AXES))
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--out", required=True)
    s.add_argument("--target", type=float, default=None, help="target loss for clock_to_target")
    s.add_argument("--grid", action="store_true", help="learning-rate grid search at a fixed iteration budget")
    s.add_argument("--budget-iters", type=int, default=None)
    s.set_defaults(func=cmd_sweep)

    g = sub.add_parser("gen-data", help="write a seeded synthetic dataset")
    g.add_argument("--n-samples", type=int, required=True)
    g.add_argument("--n-features", type=int, required=True)
    g.add_argument("--task", choices=["least_squares", "logistic"], default="least_squares")
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--margin", type=float, default=1.0)
    g.add_argument("--condition", type=float, default=1.0)
    g.add_argument("--n-test", type=int, default=0)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--format", choices=["csv", "binary"], default="csv")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    c = sub.add_parser("check", help="gradient, reduction and bound self-checks")
    c.add_argument("--config", help="run a reduction check on this configuration instead of the built-ins")
    c.add_argument("--reduction", choices=oracles.REDUCTION_KINDS)
    c.add_argument("--probes", type=int, default=100)
    c.set_defaults(func=cmd_check)

    v = sub.add_parser("version", help="print the package version")
    v.set_defaults(func=lambda args: print(__version__) or EXIT_OK)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, NumericError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
