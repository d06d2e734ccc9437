"""Command-line front end.

Exit codes: 0 success, 1 hypothesis or assertion failure, 2 configuration
error, 3 solver error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import load_config
from .diagnostics import write_record_json, write_snapshots_csv
from .errors import (
    BudgetExceeded,
    ConfigError,
    EmptyConstantTable,
    HypothesisViolated,
    InvalidSpec,
    PreconditionViolated,
    SolverError,
)
from .experiments import guarantee_label, load_sweep_spec, pullback, run_sweep
from .hypothesis import check_h1, check_h2, mass_bound_m_tilde
from .oracle import GOLDEN_PATH, run_oracle_suite
from .solver import simulate

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


def _load(args):
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["initial.seed"] = args.seed
    return load_config(args.config, overrides)


def _output_dir(args, default: str) -> Path:
    out = Path(args.output_dir) if args.output_dir else Path(default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _report(config, which: str | None = None):
    which = which or config.check.hypothesis
    if which == "h1":
        return check_h1(config.params, config.coeffs, config.domain, config.window, config.check.c_gamma_table)
    return check_h2(config.params, config.coeffs, config.domain, config.window)


def _bounds(config):
    try:
        return mass_bound_m_tilde(config.coeffs, config.domain, config.window, params=config.params)
    except HypothesisViolated:
        return None


def _summary_text(config, record, report) -> str:
    cls = record.classification
    lines = [
        f"config hash      {record.config_hash}",
        f"window           [{record.t_start:g}, {record.t_end:g}]  steps {record.stats.steps}",
        f"hypothesis       {report.which}: {'satisfied' if report.satisfied else 'not satisfied'}"
        f"  (margin_local {report.margin_local:.6g}, margin_nonlocal {report.margin_nonlocal:.6g})",
        f"guarantee        {guarantee_label(report)}",
    ]
    lines += [f"  note: {n}" for n in report.notes]
    lines.append(f"classification   {cls.kind}")
    for key, value in cls.to_dict().items():
        if key != "kind":
            lines.append(f"  {key}: {value}")
    if record.bound_checks is not None:
        b = record.bound_checks
        lines += [
            f"mass envelope    {'ok' if b.mass_envelope_ok else 'VIOLATED'} (worst ratio {b.worst_envelope_ratio:.6g})",
            f"tail mass        {b.m1_eventual:.6g} <= M1 = {b.m1_bound:.6g}: {'ok' if b.tail_mass_ok else 'VIOLATED'}",
            f"tail max u       {b.m2_eventual:.6g}",
        ]
    else:
        lines.append("bound checks     skipped (nonlocal margin not positive)")
    lines.append(f"min u, min v     {record.stats.min_u:.6g}, {record.stats.min_v:.6g}")
    return "\n".join(lines) + "\n"


def cmd_run(args) -> int:
    config = _load(args)
    report = _report(config)
    record = simulate(config)
    record.hypothesis = report.to_dict()
    bounds = _bounds(config)
    out = _output_dir(args, f"run_{record.config_hash[:12]}")
    write_snapshots_csv(record.snapshots, out / "snapshots.csv")
    write_record_json(record, out / "record.json")
    if bounds is not None:
        (out / "bounds.json").write_text(json.dumps(bounds.to_dict(), indent=2) + "\n")
    text = _summary_text(config, record, report)
    (out / "summary.txt").write_text(text)
    print(text, end="")
    print(f"artifacts in {out}")
    return EXIT_OK


def cmd_check(args) -> int:
    config = _load(args)
    try:
        report = _report(config, args.hypothesis)
    except (EmptyConstantTable, InvalidSpec) as exc:
        raise ConfigError(str(exc), field="check.c_gamma_table") from None
    bounds = _bounds(config)
    payload = {"hypothesis": report.to_dict(), "bounds": bounds.to_dict() if bounds else None}
    print(json.dumps(payload, indent=2))
    return EXIT_OK if report.satisfied else EXIT_FAIL


def cmd_sweep(args) -> int:
    spec = load_sweep_spec(args.spec, output_dir=args.output_dir, parallelism=args.parallelism)
    result = run_sweep(spec)
    for row in result.rows:
        print(f"{row['index']:5d}  {row['classification']:<18s}  {row['guarantee']}")
    print(f"uniform eta (min over Persistent runs): {result.uniform_eta}")
    print(f"phase table: {result.phase_csv}")
    return EXIT_OK


def cmd_pullback(args) -> int:
    config = _load(args)
    result = pullback(config, args.depths)
    out = _output_dir(args, "pullback_out")
    (out / "pullback.json").write_text(json.dumps(result.to_dict(include_states=True), indent=2) + "\n")
    for depth, gap in zip(result.depths[1:], result.cauchy_gaps):
        print(f"depth {depth:g}: gap {gap:.6e}")
    print(f"eta_entire {result.eta_entire:.6g}")
    print("converged" if result.converged() else "not converged")
    if len(result.depths) > 1 and not result.converged():
        return EXIT_FAIL
    return EXIT_OK


def cmd_oracle(args) -> int:
    results = run_oracle_suite(goldens_path=args.goldens, regenerate=args.regenerate)
    ok = True
    for r in results:
        print(r.describe())
        ok &= r.passed
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chemopersist", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one configuration")
    p.add_argument("config")
    p.add_argument("--output-dir")
    p.add_argument("--seed", type=int, help="override initial.seed (random initial data)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a parameter sweep")
    p.add_argument("spec")
    p.add_argument("--output-dir")
    p.add_argument("--parallelism", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("pullback", help="pullback approximation of an entire solution")
    p.add_argument("config")
    p.add_argument("--depths", type=float, nargs="+", default=[10.0, 20.0, 40.0, 80.0])
    p.add_argument("--output-dir")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_pullback)

    p = sub.add_parser("check", help="evaluate a standing hypothesis and the closed-form bounds")
    p.add_argument("config")
    p.add_argument("--hypothesis", choices=("h1", "h2"))
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("oracle", help="run the oracle suite against stored goldens")
    p.add_argument("--regenerate", action="store_true", help="rewrite the golden file")
    p.add_argument("--goldens", default=None, help=f"golden file (default {GOLDEN_PATH.name} in the package)")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, BudgetExceeded) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PreconditionViolated as exc:
        print(f"precondition violated: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
