"""Command-line entry point.

Subcommands: validate, envelope, solve2d, solve3d, sweep. Exit codes:
0 success, 2 verdict/check failure, 3 configuration error, 4 internal
solver error.
"""

from __future__ import annotations

import argparse
import sys
import traceback

from .config import load_config
from .errors import ConfigError, DomainError, SolverError
from .harness import run_envelope_tables, run_solve2d, run_solve3d, run_sweep, run_validation

EXIT_OK = 0
EXIT_VERDICT_FAIL = 2
EXIT_CONFIG_ERROR = 3
EXIT_SOLVER_ERROR = 4


def _add_common(sub):
    sub.add_argument("--config", required=True, help="experiment file ([experiment] section)")
    sub.add_argument("--out", default=None, help="output directory (overrides the config)")
    sub.add_argument("--seed", type=int, default=None, help="seed override")
    sub.add_argument(
        "--convention",
        choices=("lambda", "half-lambda"),
        default=None,
        help="planar volume-constraint convention override",
    )
    sub.add_argument("--plot", action="store_true", help="emit static plots next to the reports")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="filmdesign",
        description="Two-phase thin-film design: slab sweeps, planar limit, envelope tables.",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("validate", "run the property battery and write validation.json"),
        ("envelope", "tabulate envelope brackets and surface reductions"),
        ("solve2d", "solve the planar limit problem"),
        ("solve3d", "solve the slab problem at the first scheduled thickness"),
        ("sweep", "full thickness sweep with the convergence verdict"),
    ):
        _add_common(subs.add_parser(name, help=help_text))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(
            args.config,
            overrides={"out_dir": args.out, "seed": args.seed, "convention": args.convention},
        )
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    try:
        if args.command == "validate":
            results, passed = run_validation(config)
            for r in results:
                print(f"[{'PASS' if r['passed'] else 'FAIL'}] {r['name']}: {r['detail']}")
            return EXIT_OK if passed else EXIT_VERDICT_FAIL

        if args.command == "envelope":
            summary = run_envelope_tables(config)
            for phase, info in summary["phases"].items():
                dev = info["max_closed_form_deviation"]
                extra = f", max closed-form deviation {dev:.3e}" if dev is not None else ""
                print(f"phase {phase}: {info['points']} points{extra}")
            return EXIT_OK

        if args.command == "solve2d":
            payload = run_solve2d(config)
            print(f"planar minimum {payload['energy']:.12g}")
            if args.plot:
                from .plots import plot_phase_field

                plot_phase_field(config, which="2d")
            return EXIT_OK

        if args.command == "solve3d":
            payload = run_solve3d(config)
            print(f"slab minimum at eps={payload['eps']}: {payload['energy']:.12g}")
            return EXIT_OK

        report = run_sweep(config)
        for entry in report.per_eps:
            print(
                f"eps={entry['eps']:<8g} total={entry['breakdown'].total:.12g} "
                f"gap={entry['gap']:.3e}"
            )
        print(f"limit total={report.limit_breakdown.total:.12g}")
        v = report.verdict
        print(
            f"verdict: {'PASS' if v.passed else 'FAIL'} "
            f"(monotone within slack: {v.monotone_within_slack}, "
            f"final relative gap {v.final_relative_gap:.3%})"
        )
        if args.plot:
            from .plots import plot_gap_curve, plot_phase_field

            plot_gap_curve(config, report)
            plot_phase_field(config, which="2d")
            plot_phase_field(config, which="3d")
        return EXIT_OK if v.passed else EXIT_VERDICT_FAIL

    except (DomainError, ConfigError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER_ERROR
    except Exception:
        traceback.print_exc()
        return EXIT_SOLVER_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
