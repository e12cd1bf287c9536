"""Command line entry point: ``cpass run|verify|dof|power|converge|compare``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiments import ConfigError, has_errors, load_spec, parse_spec, rows_to_csv, run

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_CHECK_FAILED = 0, 1, 2, 3

SHORTCUTS = {
    "dof": "dof_sweep",
    "power": "power_scaling",
    "converge": "convergence",
    "compare": "architecture_compare",
}

# flags that map one-to-one onto experiment-file keys
CONFIG_FLAGS = ("M", "K", "L", "f_c", "n_eff", "alpha_g", "P_T_dBm", "N0_dBm", "Delta", "area",
                "feed_x", "waveguide_spacing", "eps", "I_max", "N_grid", "inner_sweeps")


def _add_run_options(p):
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.add_argument("--seed-base", type=int, help="first user-drop seed")
    p.add_argument("--trials", type=int, help="number of seeded trials per sweep point")
    p.add_argument("--threads", type=int, default=1, help="worker processes (default 1)")
    p.add_argument("--timing", action="store_true",
                   help="fill the wall_time_ms column (output is then no longer byte-reproducible)")


def build_parser():
    ap = argparse.ArgumentParser(prog="cpass", description="Center-fed pinching-antenna experiments.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="run an experiment file")
    p.add_argument("spec", help="experiment file (key = value lines)")
    _add_run_options(p)

    p = sub.add_parser("verify", help="run the acceptance checks")
    p.add_argument("--out", help="write the metrics CSV here")
    p.add_argument("--seed-base", type=int, default=0)
    p.add_argument("--only", help="comma-separated check numbers, e.g. 1,3")

    for name, exp in SHORTCUTS.items():
        p = sub.add_parser(name, help=f"run the {exp} experiment with flag overrides")
        _add_run_options(p)
        for key in CONFIG_FLAGS:
            p.add_argument(f"--{key}", dest=f"cfg_{key}", metavar="X")
        p.add_argument("--variants", help="comma-separated architectures")
        p.add_argument("--sweep", action="append", default=[], metavar="PARAM=V1,V2,...",
                       help="sweep a parameter (repeatable; several form a grid)")
    return ap


def _shortcut_text(args, experiment):
    lines = [f"experiment = {experiment}"]
    for key in CONFIG_FLAGS:
        val = getattr(args, f"cfg_{key}")
        if val is not None:
            lines.append(f"{key} = {val}")
    if args.variants:
        lines.append(f"variants = {args.variants}")
    for item in args.sweep:
        if "=" not in item:
            raise ConfigError(f"--sweep expects PARAM=V1,V2,..., got {item!r}", key="sweep")
        name, vals = item.split("=", 1)
        lines.append(f"sweep.{name.strip()} = {vals}")
    return "\n".join(lines) + "\n"


def _override_seeds(spec, seed_base, trials):
    if seed_base is None and trials is None:
        return spec
    if trials is not None and trials < 1:
        raise ConfigError("trials must be >= 1", key="trials")
    base = seed_base if seed_base is not None else (spec.seeds[0] if spec.seeds else 0)
    n = trials if trials is not None else len(spec.seeds)
    spec.trials = n
    spec.seeds = list(range(base, base + n))
    return spec


def _run_experiment(spec, args):
    rows = run(spec, threads=max(1, args.threads), timing=args.timing)
    text = rows_to_csv(rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", newline="")
    else:
        sys.stdout.write(text)
    if has_errors(rows):
        n = sum(1 for r in rows if r.error and r.stat == "trial")
        print(f"cpass: {n} result rows carry solver errors", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _verify(args):
    from .verify import results_to_csv, run_all

    only = {k.strip() for k in args.only.split(",")} if args.only else None
    results = run_all(seed_base=args.seed_base, only=only, echo=print)
    if args.out:
        Path(args.out).write_text(results_to_csv(results), encoding="utf-8", newline="")
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK_FAILED


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.cmd == "verify":
            return _verify(args)
        if args.cmd == "run":
            spec = load_spec(args.spec)
        else:
            spec = parse_spec(_shortcut_text(args, SHORTCUTS[args.cmd]))
        spec = _override_seeds(spec, args.seed_base, args.trials)
        return _run_experiment(spec, args)
    except (ConfigError, ValueError, OSError) as err:
        print(f"cpass: {err}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
