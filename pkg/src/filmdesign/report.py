"""Sweep reports, the convergence verdict, and JSON/CSV emission."""

from __future__ import annotations

import json
import platform
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .io import write_csv
from .solve2d import EnergyBreakdown

# Frozen verdict policy: gaps may wiggle by 5% between consecutive epsilons
# (plus an absolute guard for gaps at float-noise level), and the last gap
# must land within 10% of the limit energy.
GAP_SLACK = 0.05
GAP_ABS_GUARD = 1e-9
FINAL_RELATIVE_GAP = 0.10


@dataclass(frozen=True)
class Verdict:
    passed: bool
    monotone_within_slack: bool
    final_relative_gap: float
    slack: float = GAP_SLACK
    threshold: float = FINAL_RELATIVE_GAP


def convergence_verdict(gaps, limit_energy: float) -> Verdict:
    gaps = [abs(float(g)) for g in gaps]
    monotone = all(b <= (1.0 + GAP_SLACK) * a + GAP_ABS_GUARD for a, b in zip(gaps, gaps[1:]))
    final_rel = gaps[-1] / max(abs(limit_energy), 1e-30)
    return Verdict(
        passed=bool(monotone and final_rel <= FINAL_RELATIVE_GAP),
        monotone_within_slack=bool(monotone),
        final_relative_gap=float(final_rel),
    )


def breakdown_dict(bd: EnergyBreakdown) -> dict:
    out = asdict(bd)
    out["log"] = list(out["log"])
    return out


def environment_stamp(seed: int) -> dict:
    return {
        "package": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.system().lower(),
        "seed": seed,
    }


@dataclass(eq=False)
class SweepReport:
    eps_schedule: tuple
    limit_breakdown: EnergyBreakdown
    limit_fraction: float
    per_eps: list  # dicts: eps, breakdown, diagnostics, gap
    verdict: Verdict
    environment: dict
    config: dict

    @property
    def gaps(self) -> list:
        return [entry["gap"] for entry in self.per_eps]

    def to_json_dict(self) -> dict:
        return {
            "schema": "filmdesign-report/1",
            "command": "sweep",
            "environment": self.environment,
            "config": self.config,
            "limit": {
                "fraction": self.limit_fraction,
                "energy": self.limit_breakdown.total,
                "breakdown": breakdown_dict(self.limit_breakdown),
            },
            "per_eps": [
                {
                    "eps": entry["eps"],
                    "gap": entry["gap"],
                    "breakdown": breakdown_dict(entry["breakdown"]),
                    "diagnostics": entry["diagnostics"],
                }
                for entry in self.per_eps
            ],
            "verdict": asdict(self.verdict),
        }

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")
        header = [
            "eps", "bulk", "load", "perimeter", "total", "gap",
            "u_lp", "transverse_lp", "scaled_perimeter",
        ]
        rows = []
        for entry in self.per_eps:
            bd = entry["breakdown"]
            diag = entry["diagnostics"]
            rows.append([
                entry["eps"], bd.bulk, bd.load, bd.perimeter, bd.total, entry["gap"],
                diag["u_lp"], diag["transverse_lp"], diag["scaled_perimeter"],
            ])
        lb = self.limit_breakdown
        rows.append([0.0, lb.bulk, lb.load, lb.perimeter, lb.total, 0.0, "", "", ""])
        write_csv(out / "sweep.csv", header, rows)


def write_validation_report(out_dir, results: list, environment: dict, config: dict) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "schema": "filmdesign-report/1",
        "command": "validate",
        "environment": environment,
        "config": config,
        "passed": all(r["passed"] for r in results),
        "checks": results,
    }
    (out / "validation.json").write_text(json.dumps(payload, indent=2) + "\n")
    write_csv(
        out / "validation.csv",
        ["check", "passed", "detail"],
        [[r["name"], int(r["passed"]), r["detail"]] for r in results],
    )
