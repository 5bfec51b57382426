#!/usr/bin/env python3
"""Run the property battery (growth, envelopes, identities, oracles)."""

import argparse
import sys
from pathlib import Path

from filmdesign.config import load_config
from filmdesign.harness import run_validation

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(ROOT / "configs" / "kohn_strang.cfg"))
    ap.add_argument("--out", default=None)
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()

    config = load_config(args.config, overrides={"out_dir": args.out, "seed": args.seed})
    results, passed = run_validation(config)
    for r in results:
        print(f"[{'PASS' if r['passed'] else 'FAIL'}] {r['name']}: {r['detail']}")
    sys.exit(0 if passed else 2)


if __name__ == "__main__":
    main()
