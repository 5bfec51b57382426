#!/usr/bin/env python3
"""Tabulate envelope brackets for both phases on the default matrix slice.

For quadratic pairs the tables carry a closed-form comparison column; the
script prints the largest deviation of the upper bound from it.
"""

import argparse
from pathlib import Path

from filmdesign.config import load_config
from filmdesign.harness import run_envelope_tables

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(ROOT / "configs" / "kohn_strang.cfg"))
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    config = load_config(args.config, overrides={"out_dir": args.out})
    summary = run_envelope_tables(config)
    for phase, info in summary["phases"].items():
        dev = info["max_closed_form_deviation"]
        extra = f", max closed-form deviation {dev:.3e}" if dev is not None else ""
        print(f"phase {phase}: {info['points']} slice points{extra}")


if __name__ == "__main__":
    main()
