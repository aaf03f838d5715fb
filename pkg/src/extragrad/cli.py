"""Command-line interface.

Subcommands:
    run <config.json>            execute a seeded experiment, write outputs
    check lemma31|moreau|grad <config.json>   standalone verification suites
    summarize <records.csv>      aggregate a trajectories CSV
    schedule --L --c --S         print the stagewise step/iteration table

Exit codes: 0 success, 1 a check failed, 2 config error, 3 runtime or
divergence error. EXTRAGRAD_THREADS overrides --threads when set.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .errors import ConfigError
from .harness import (build_problem, execute, parse_config, run_grad_check,
                      run_lemma31_check, run_moreau_check, schedule_table,
                      summarize_csv_rows)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_RUNTIME_ERROR = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="extragrad",
                                     description="extrapolated-gradient experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config", type=Path)
    p_run.add_argument("--out-dir", type=Path, default=None,
                       help="directory for output files (default: paths as configured)")
    p_run.add_argument("--record-every", type=int, default=None,
                       help="override outputs.record_every")
    p_run.add_argument("--threads", type=int, default=1)
    p_run.add_argument("--seed-override", type=str, default=None,
                       help="comma-separated seeds replacing the config's list")

    p_check = sub.add_parser("check", help="run a verification suite")
    p_check.add_argument("suite", choices=["lemma31", "moreau", "grad"])
    p_check.add_argument("config", type=Path)
    p_check.add_argument("--threads", type=int, default=1)

    p_sum = sub.add_parser("summarize", help="aggregate a trajectories CSV")
    p_sum.add_argument("records", type=Path)

    p_sched = sub.add_parser("schedule", help="print the stagewise schedule table")
    p_sched.add_argument("--L", type=float, required=True)
    p_sched.add_argument("--c", type=float, required=True)
    p_sched.add_argument("--S", type=int, required=True)
    p_sched.add_argument("--alpha", type=float, default=2.0)
    p_sched.add_argument("--gamma", type=float, default=None)
    return parser


def _effective_threads(requested: int) -> int:
    env = os.environ.get("EXTRAGRAD_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            print(f"warning: ignoring invalid EXTRAGRAD_THREADS={env!r}",
                  file=sys.stderr)
    return max(1, requested)


def _cmd_run(args) -> int:
    cfg = parse_config(args.config)
    if args.seed_override:
        try:
            cfg.seeds = [int(s) for s in args.seed_override.split(",") if s]
        except ValueError:
            raise ConfigError("--seed-override", "must be comma-separated integers")
        if not cfg.seeds:
            raise ConfigError("--seed-override", "must name at least one seed")
    if args.record_every is not None:
        if args.record_every < 1:
            raise ConfigError("--record-every", "must be >= 1")
        cfg.record_every = args.record_every
    if args.out_dir is not None:
        cfg.trajectory_path = str(args.out_dir / Path(cfg.trajectory_path).name)
        cfg.ledger_path = str(args.out_dir / Path(cfg.ledger_path).name)

    result = execute(cfg, threads=_effective_threads(args.threads))
    for rec in result.records:
        status = f"error: {rec.error}" if rec.error else (
            f"min ||grad||={rec.min_grad_norm:.6e}, "
            f"oracle calls={rec.grad_oracle_calls}")
        print(f"run {rec.run_id} seed={rec.seed}: {status}")
    n_bounds = sum(1 for e in result.ledger_entries if e["kind"] == "bound_report")
    n_checks = sum(1 for e in result.ledger_entries if e["kind"] == "check")
    print(f"wrote {cfg.trajectory_path} and {cfg.ledger_path} "
          f"({n_bounds} bound reports, {n_checks} checks)")
    for entry in result.ledger_entries:
        if entry["kind"] == "bound_report":
            tag = f"thm{entry['theorem_id']}"
            who = "aggregate" if entry["seed"] is None else f"seed={entry['seed']}"
            print(f"bound {tag} [{who}]: lhs={entry['lhs']:.6e} "
                  f"rhs={entry['rhs']:.6e} pass={entry['pass']}")
        elif entry["kind"] == "check":
            print(f"check {entry['name']}: pass={entry['pass']}")
    if result.run_failures:
        return EXIT_RUNTIME_ERROR
    if result.check_failures:
        return EXIT_CHECK_FAILED
    return EXIT_OK


def _cmd_check(args) -> int:
    cfg = parse_config(args.config)
    if args.suite == "lemma31":
        entries, failures = run_lemma31_check(cfg.check_params.get("lemma31", {}))
        for e in entries:
            print(f"lemma31 d={e['dim']} radius={e['radius']} gamma={e['gamma']}: "
                  f"worst_slack={e['worst_slack']:.3e} pass={e['pass']}")
        return EXIT_OK if failures == 0 else EXIT_CHECK_FAILED
    spec = build_problem(cfg.problem_name, cfg.problem_params)
    if args.suite == "moreau":
        entry, ok = run_moreau_check(cfg, spec)
        print(f"moreau on {spec.name}: value={entry['max_value_violation']:.3e} "
              f"norm={entry['max_norm_identity_error']:.3e} "
              f"grad={entry['max_grad_violation']:.3e} "
              f"(slack {entry['slack']:.3e}) pass={ok}")
        return EXIT_OK if ok else EXIT_CHECK_FAILED
    entry, ok = run_grad_check(cfg, spec)
    print(f"grad check on {spec.name}: max_rel_err={entry['max_rel_err']:.3e} "
          f"(tol {entry['rel_tol']}) pass={ok}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def _cmd_summarize(args) -> int:
    if not args.records.exists():
        raise ConfigError(str(args.records), "records file does not exist")
    summary = summarize_csv_rows(args.records)
    cols = ["run_id", "seed", "n_rows", "min_grad_norm", "sum_step_diff_sq", "last_f"]
    print(",".join(cols))
    for row in summary["per_seed"]:
        print(",".join(str(row[c]) for c in cols))
    agg = summary["aggregate"]
    print(f"aggregate: n_runs={agg['n_runs']} "
          f"mean_min_grad_norm={agg['mean_min_grad_norm']!r} "
          f"std_min_grad_norm={agg['std_min_grad_norm']!r}")
    return EXIT_OK


def _cmd_schedule(args) -> int:
    rows = schedule_table(args.L, args.c, args.S, alpha=args.alpha, gamma=args.gamma)
    print("s,eta_s,T_s,w_s,p_s")
    for row in rows:
        print(f"{row['s']},{row['eta_s']!r},{row['T_s']},{row['w_s']!r},{row['p_s']!r}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "check":
            return _cmd_check(args)
        if args.command == "summarize":
            return _cmd_summarize(args)
        return _cmd_schedule(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except ValueError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except Exception as err:  # divergence, convergence, evaluation failures
        print(f"runtime error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
