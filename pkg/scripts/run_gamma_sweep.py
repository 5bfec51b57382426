#!/usr/bin/env python3
"""Thickness sweep on the quadratic benchmark pair, with plots.

Runs the 16x16x4 sweep from configs/kohn_strang.cfg and prints the per-eps
energies, the planar limit energy, and the convergence verdict.
"""

import argparse
from pathlib import Path

from filmdesign.config import load_config
from filmdesign.harness import run_sweep
from filmdesign.plots import plot_gap_curve

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(ROOT / "configs" / "kohn_strang.cfg"))
    ap.add_argument("--out", default=None)
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()

    config = load_config(args.config, overrides={"out_dir": args.out, "seed": args.seed})
    report = run_sweep(config)
    for entry in report.per_eps:
        print(f"eps={entry['eps']:<8g} total={entry['breakdown'].total:.12g} gap={entry['gap']:.3e}")
    print(f"limit total={report.limit_breakdown.total:.12g}")
    v = report.verdict
    print(f"verdict: {'PASS' if v.passed else 'FAIL'} (final relative gap {v.final_relative_gap:.3%})")
    print(f"gap curve: {plot_gap_curve(config, report)}")


if __name__ == "__main__":
    main()
