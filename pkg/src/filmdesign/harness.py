"""Experiment orchestration: sweeps, validation battery, envelope tables.

Each entry point consumes an ExperimentConfig, runs the relevant solvers,
and writes plain artifacts (report.json, CSV tables, field dumps) into the
output directory. Everything is deterministic under a fixed seed.
"""

from __future__ import annotations

import json
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, config_echo
from .densities import frob2, validate_growth
from .envelope import (
    SliceSpec,
    cell_problem_ladder,
    cell_problem_upper,
    envelope_slice,
    envelope_upper_probe,
    laminate_upper_batch,
)
from .errors import ConfigError, DomainError
from .io import write_cell_field_2d, write_cell_field_3d, write_csv, write_node_field_2d, write_node_field_3d
from .mesh import PlanarMesh, SlabMesh
from .oracles import (
    exhaustive_balanced_interface,
    exhaustive_phase_minimum,
    naive_energy_2d,
    naive_energy_3d,
)
from .report import (
    SweepReport,
    convergence_verdict,
    environment_stamp,
    write_validation_report,
)
from .solve2d import (
    Displacement2D,
    PhaseField2D,
    build_radial_tables,
    energy_2d,
    solve_limit,
)
from .solve3d import (
    Displacement3D,
    PhaseField3D,
    VectorPolynomial,
    energy_3d,
    flatten_state,
    lift_planar_state,
    minimize_eps,
    perimeter_roundtrip_check,
    rescale_roundtrip_check,
)
from .surface import Euclidean, convexify_planar

E11 = np.zeros((3, 2))
E11[0, 0] = 1.0
E22 = np.zeros((3, 2))
E22[1, 1] = 1.0


def _default_slice(config: ExperimentConfig) -> SliceSpec:
    grid = np.linspace(-config.envelope_halfwidth, config.envelope_halfwidth, config.envelope_grid)
    return SliceSpec(origin=np.zeros((3, 2)), dir1=E11, dir2=E22, s_values=grid, t_values=grid)


@contextmanager
def _stage(name: str):
    """Re-raise stage failures with the failing stage named."""
    try:
        yield
    except DomainError as exc:
        raise DomainError(f"{name}: {exc}") from exc


def _initial_phase(config: ExperimentConfig, mesh: PlanarMesh) -> PhaseField2D | None:
    if not config.init_phase_file:
        return None
    from .io import read_field

    kind, dims, values = read_field(config.init_phase_file)
    if kind != "cells" or dims != (mesh.nx, mesh.ny):
        raise ConfigError(f"init phase file does not match the {mesh.nx}x{mesh.ny} mesh")
    return PhaseField2D(mesh=mesh, values=np.asarray(values).astype(np.int8))


# ---------------------------------------------------------------------------
# Sweep
# ---------------------------------------------------------------------------

def run_sweep(config: ExperimentConfig, out_dir=None, write: bool = True) -> SweepReport:
    """Planar limit solve, then the slab problem along the eps schedule.

    Later thicknesses are warm-started from the previous minimizer, its
    transverse flattening, and (when the constraint conventions agree) the
    lifted planar minimizer. The report carries per-eps energy gaps against
    the planar minimum and the frozen convergence verdict.
    """
    out = Path(out_dir if out_dir is not None else config.out_dir)
    spec = config.build_bulk_spec()
    surface = config.build_surface()
    load = config.build_load()
    mesh2 = config.planar_mesh()
    slab = config.slab_mesh()
    mode = config.effective_density_mode()
    tables = None
    if mode == "tabulated-envelope":
        tables = build_radial_tables(spec, r_max=8.0)
    psibar = convexify_planar(surface, config.psibar_directions) if surface is not None else None
    seeds = config.restart_seeds()

    with _stage("planar limit solve"):
        state2, bd2 = solve_limit(
            mesh2, spec, load, config.limit_fraction(), surface=psibar, density_mode=mode,
            alternations=config.alternations, seeds=seeds, tol=config.tol, tables=tables,
            init_phase=_initial_phase(config, mesh2),
            u_tol=config.u_tol, u_maxiter=config.u_maxiter,
        )

    lift_compatible = abs(config.limit_fraction() - config.target_fraction) < 1e-12
    per_eps = []
    prev = None
    for k, eps in enumerate(config.eps_schedule):
        starts = []
        if prev is not None:
            starts.append((prev.phase, prev.displacement))
            starts.append(flatten_state(slab, prev.phase, prev.displacement))
        if lift_compatible:
            starts.append(lift_planar_state(slab, state2))
        eps_seeds = seeds if k == 0 else (int(seeds[0]) + k,)
        with _stage(f"slab solve at eps={eps:g}"):
            state3, bd3 = minimize_eps(
                slab, eps, spec, load, config.target_fraction, surface=surface,
                alternations=config.alternations, seeds=eps_seeds, tol=config.tol,
                starts=tuple(starts), u_tol=config.u_tol, u_maxiter=config.u_maxiter,
            )
        per_eps.append(
            {
                "eps": float(eps),
                "breakdown": bd3,
                "diagnostics": state3.diagnostics,
                "gap": abs(bd3.total - bd2.total),
            }
        )
        prev = state3

    verdict = convergence_verdict([e["gap"] for e in per_eps], bd2.total)
    report = SweepReport(
        eps_schedule=config.eps_schedule,
        limit_breakdown=bd2,
        limit_fraction=config.limit_fraction(),
        per_eps=per_eps,
        verdict=verdict,
        environment=environment_stamp(config.seed),
        config=config_echo(config),
    )
    if write:
        report.write(out)
        write_cell_field_2d(out / "phase_2d.txt", mesh2.nx, mesh2.ny, state2.phase.values)
        write_node_field_2d(out / "displacement_2d.txt", mesh2.nx, mesh2.ny, state2.displacement.values)
        write_cell_field_3d(out / "phase_3d.txt", mesh2.nx, mesh2.ny, slab.layers, prev.phase.values)
        write_node_field_3d(
            out / "displacement_3d.txt", mesh2.nx, mesh2.ny, slab.layers, prev.displacement.values
        )
        if psibar is not None:
            write_csv(
                out / "psibar.csv",
                ["theta", "psibar", "psibar_convex"],
                [
                    [t, r, v]
                    for t, r, v in zip(
                        psibar.thetas,
                        psibar.reduced,
                        psibar.envelope(np.stack([np.cos(psibar.thetas), np.sin(psibar.thetas)], axis=-1)),
                    )
                ],
            )
    return report


# ---------------------------------------------------------------------------
# Envelope tables
# ---------------------------------------------------------------------------

def run_envelope_tables(config: ExperimentConfig, out_dir=None, write: bool = True) -> dict:
    """Tabulate envelope brackets on the default slice for both phases."""
    out = Path(out_dir if out_dir is not None else config.out_dir)
    spec = config.build_bulk_spec()
    slice_spec = _default_slice(config)
    summary: dict = {"schema": "filmdesign-report/1", "command": "envelope", "phases": {}}
    if write:
        out.mkdir(parents=True, exist_ok=True)
    closed_form = spec.is_quadratic_pair
    for phase in (1, 2):
        table = envelope_slice(
            spec, phase, slice_spec, depth=config.envelope_depth, cell_n=config.envelope_cell_n
        )
        header = ["s", "t", "wbar", "lower", "upper", "method_lower", "method_upper"]
        if closed_form:
            header += ["closed_form", "abs_dev"]
        rows = []
        max_dev = 0.0
        alpha = (spec.w1 if phase == 1 else spec.w2).alpha if closed_form else None
        for i, s in enumerate(slice_spec.s_values):
            for j, t in enumerate(slice_spec.t_values):
                row = [
                    float(s), float(t), float(table.wbar[i, j]),
                    float(table.lower[i, j]), float(table.upper[i, j]),
                    table.method_lower, table.method_upper,
                ]
                if closed_form:
                    point = slice_spec.points()[i, j]
                    cf = alpha * float(frob2(point))
                    dev = abs(float(table.upper[i, j]) - cf)
                    max_dev = max(max_dev, dev)
                    row += [cf, dev]
                rows.append(row)
        if write:
            write_csv(out / f"envelope_phase{phase}.csv", header, rows)
        summary["phases"][str(phase)] = {
            "max_closed_form_deviation": max_dev if closed_form else None,
            "points": int(table.wbar.size),
        }

    surface = config.build_surface()
    if surface is not None:
        psibar = convexify_planar(surface, config.psibar_directions)
        dirs = np.stack([np.cos(psibar.thetas), np.sin(psibar.thetas)], axis=-1)
        if write:
            write_csv(
                out / "psibar.csv",
                ["theta", "psibar", "psibar_convex"],
                list(zip(psibar.thetas, psibar.reduced, psibar.envelope(dirs))),
            )
        summary["psibar_directions"] = int(len(psibar.thetas))
    if write:
        (out / "envelope.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


# ---------------------------------------------------------------------------
# Single-problem commands
# ---------------------------------------------------------------------------

def run_solve2d(config: ExperimentConfig, out_dir=None, write: bool = True) -> dict:
    out = Path(out_dir if out_dir is not None else config.out_dir)
    spec = config.build_bulk_spec()
    surface = config.build_surface()
    psibar = convexify_planar(surface, config.psibar_directions) if surface is not None else None
    mode = config.effective_density_mode()
    tables = build_radial_tables(spec, r_max=8.0) if mode == "tabulated-envelope" else None
    mesh2 = config.planar_mesh()
    state, bd = solve_limit(
        mesh2, spec, config.build_load(), config.limit_fraction(), surface=psibar,
        density_mode=mode, alternations=config.alternations, seeds=config.restart_seeds(),
        tol=config.tol, tables=tables, init_phase=_initial_phase(config, mesh2),
        u_tol=config.u_tol, u_maxiter=config.u_maxiter,
    )
    payload = {
        "schema": "filmdesign-report/1",
        "command": "solve2d",
        "environment": environment_stamp(config.seed),
        "config": config_echo(config),
        "energy": bd.total,
        "breakdown": {
            "bulk": bd.bulk, "load": bd.load, "perimeter": bd.perimeter,
            "total": bd.total, "constraint_residual": bd.constraint_residual,
            "log": list(bd.log),
        },
    }
    if write:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(payload, indent=2) + "\n")
        write_cell_field_2d(out / "phase_2d.txt", mesh2.nx, mesh2.ny, state.phase.values)
        write_node_field_2d(out / "displacement_2d.txt", mesh2.nx, mesh2.ny, state.displacement.values)
    return payload


def run_solve3d(config: ExperimentConfig, out_dir=None, write: bool = True) -> dict:
    out = Path(out_dir if out_dir is not None else config.out_dir)
    spec = config.build_bulk_spec()
    slab = config.slab_mesh()
    eps = config.eps_schedule[0]
    state, bd = minimize_eps(
        slab, eps, spec, config.build_load(), config.target_fraction,
        surface=config.build_surface(), alternations=config.alternations,
        seeds=config.restart_seeds(), tol=config.tol,
        u_tol=config.u_tol, u_maxiter=config.u_maxiter,
    )
    payload = {
        "schema": "filmdesign-report/1",
        "command": "solve3d",
        "environment": environment_stamp(config.seed),
        "config": config_echo(config),
        "eps": eps,
        "energy": bd.total,
        "breakdown": {
            "bulk": bd.bulk, "load": bd.load, "perimeter": bd.perimeter,
            "total": bd.total, "constraint_residual": bd.constraint_residual,
            "log": list(bd.log),
        },
        "diagnostics": state.diagnostics,
    }
    if write:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(payload, indent=2) + "\n")
        write_cell_field_3d(out / "phase_3d.txt", slab.base.nx, slab.base.ny, slab.layers, state.phase.values)
        write_node_field_3d(
            out / "displacement_3d.txt", slab.base.nx, slab.base.ny, slab.layers, state.displacement.values
        )
    return payload


# ---------------------------------------------------------------------------
# Validation battery
# ---------------------------------------------------------------------------

def _check(name, passed, detail):
    return {"name": name, "passed": bool(passed), "detail": detail}


def run_validation(config: ExperimentConfig, out_dir=None, write: bool = True) -> tuple[list, bool]:
    """Run the full property battery; continues past failures.

    Covers the growth sandwich, envelope ordering and refinement
    monotonicity, the label-Lipschitz bound at envelope level, surface
    density growth, the planar envelope properties (including convexity of
    its 1-homogeneous extension), the dilation identities, double-assembly
    agreement, exhaustive-oracle equivalence on small meshes, the planar
    equality for transverse-uniform states, and rerun determinism.
    """
    out = Path(out_dir if out_dir is not None else config.out_dir)
    spec = config.build_bulk_spec()
    load = config.build_load()
    rng = np.random.default_rng(config.seed)
    results = []

    report = validate_growth(spec, config.validation_samples, radius=3.0, seed=config.seed)
    results.append(
        _check("growth-sandwich", report.passed, f"worst margin {report.worst_margin:.3e}")
    )

    pts = 1.5 * rng.standard_normal((24, 3, 2))
    raw1 = spec.w1.membrane(pts) if spec.w1.analytic_reduction else None
    if raw1 is not None:
        lam = laminate_upper_batch(spec, 1, pts, depth=1)
        ok_upper = np.all(lam <= raw1 + 1e-9)
        floor = spec.beta_lower * (frob2(pts) ** (spec.p / 2.0) - 1.0)
        ok_floor = np.all(lam >= floor - 1e-9)
        cells = [cell_problem_upper(spec, 1, p, 2).value for p in pts[:4]]
        ok_cell = all(c <= r + 1e-9 for c, r in zip(cells, raw1[:4]))
        ladder = cell_problem_ladder(spec, 1, pts[0], ns=(1, 2, 4))
        ok_ladder = all(b.value <= a.value + 1e-9 for a, b in zip(ladder, ladder[1:]))
        results.append(
            _check(
                "envelope-ordering",
                ok_upper and ok_floor and ok_cell and ok_ladder,
                f"laminate<=raw {bool(ok_upper)}, floor {bool(ok_floor)}, "
                f"cell<=raw {bool(ok_cell)}, ladder monotone {bool(ok_ladder)}",
            )
        )

        fit_pts = 2.0 * np.random.default_rng(1301).standard_normal((256, 3, 2))
        check_pts = 2.0 * np.random.default_rng(2602).standard_normal((256, 3, 2))
        scale_fit = 1.0 + frob2(fit_pts) ** (spec.p / 2.0)
        c_est = 1.25 * float(
            np.max(
                np.abs(
                    envelope_upper_probe(spec, 1, fit_pts) - envelope_upper_probe(spec, 2, fit_pts)
                )
                / scale_fit
            )
        )
        scale_check = 1.0 + frob2(check_pts) ** (spec.p / 2.0)
        ratios = np.abs(
            envelope_upper_probe(spec, 1, check_pts) - envelope_upper_probe(spec, 2, check_pts)
        ) / scale_check
        results.append(
            _check(
                "envelope-chi-lipschitz",
                np.all(ratios <= c_est),
                f"C_est {c_est:.6g}, worst ratio {float(np.max(ratios)):.6g}",
            )
        )

    surface = config.build_surface() or Euclidean()
    dirs = rng.standard_normal((config.validation_samples, 3))
    vals = surface(dirs)
    norms = np.linalg.norm(dirs, axis=-1)
    c = surface.comparability
    ok_psi = np.all(vals <= c * norms + 1e-9) and np.all(vals >= norms / c - 1e-9)
    results.append(_check("psi-growth", ok_psi, f"comparability constant {c:.6g}"))

    psibar = convexify_planar(surface, config.psibar_directions)
    pairs = rng.standard_normal((1000, 2, 2))
    mid = psibar.envelope(0.5 * (pairs[:, 0] + pairs[:, 1]))
    ok_convex = np.all(mid <= 0.5 * (psibar.envelope(pairs[:, 0]) + psibar.envelope(pairs[:, 1])) + 1e-9)
    etas = rng.standard_normal((1000, 2))
    ok_even = np.array_equal(psibar.envelope(-etas), psibar.envelope(etas))
    ok_homog = np.array_equal(psibar.envelope(2.0 * etas), 2.0 * psibar.envelope(etas))
    # the support-function construction is below the reduction exactly at the
    # sampled directions; between samples it may overshoot by O(1/M^2)
    sampled_dirs = np.stack([np.cos(psibar.thetas), np.sin(psibar.thetas)], axis=-1)
    ok_below = np.all(psibar.envelope(sampled_dirs) <= psibar.reduced + 1e-9)
    ok_floor2 = np.all(psibar.envelope(etas) >= np.linalg.norm(etas, axis=-1) / c - 1e-9)
    results.append(
        _check(
            "psibar-properties",
            ok_convex and ok_even and ok_homog and ok_below and ok_floor2,
            f"midpoint-convex {bool(ok_convex)}, even {bool(ok_even)}, "
            f"dyadic-homogeneous {bool(ok_homog)}, below-reduction {bool(ok_below)}, "
            f"coercive {bool(ok_floor2)}",
        )
    )

    polys = [
        VectorPolynomial(terms=(((1, 0, 0), (0.5, 0.0, 0.0)), ((0, 0, 1), (0.0, 0.0, -0.4)))),
        VectorPolynomial(terms=(((0, 0, 2), (0.0, 0.0, 1.0)),)),
        VectorPolynomial(terms=(((1, 1, 1), (0.2, 0.0, 0.0)), ((0, 0, 3), (0.0, 0.1, 0.0)))),
    ]
    worst = 0.0
    for poly in polys:
        rep = rescale_roundtrip_check(poly, eps=0.25)
        worst = max(worst, rep.abs_error / max(1.0, abs(rep.slab_side)))
    results.append(_check("rescale-roundtrip", worst <= 1e-10, f"worst relative error {worst:.3e}"))

    slab = SlabMesh(PlanarMesh(4, 4, config.lx, config.ly), layers=2)
    centers = slab.cell_centers
    phase_slab = PhaseField3D(mesh=slab, values=((centers[:, 2] < 0) & (centers[:, 0] > 0.3)).astype(np.int8))
    prep = perimeter_roundtrip_check(slab, phase_slab, eps=0.25)
    results.append(
        _check("perimeter-roundtrip", prep.abs_error <= 1e-12 * max(1.0, prep.slab_side),
               f"absolute error {prep.abs_error:.3e}")
    )

    mesh2 = PlanarMesh(3, 4, config.lx, config.ly)
    values = np.zeros(mesh2.n_cells, dtype=np.int8)
    values[rng.choice(mesh2.n_cells, 6, replace=False)] = 1
    phase2 = PhaseField2D(mesh=mesh2, values=values)
    u2 = np.zeros((mesh2.n_nodes, 3))
    u2[~mesh2.boundary_nodes] = 0.4 * rng.standard_normal((int(np.sum(~mesh2.boundary_nodes)), 3))
    disp2 = Displacement2D(mesh=mesh2, values=u2)
    bd2 = energy_2d(mesh2, phase2, disp2, spec, load)
    naive2 = naive_energy_2d(mesh2, phase2.values, disp2.values, spec, load)
    dev2 = abs(bd2.total - naive2[3])
    slab2 = SlabMesh(mesh2, layers=2)
    phase3 = PhaseField3D.random_balanced(slab2, 0.5, seed=int(rng.integers(2**31)))
    u3 = np.zeros((slab2.n_nodes, 3))
    free3 = ~slab2.lateral_boundary_nodes
    u3[free3] = 0.4 * rng.standard_normal((int(np.sum(free3)), 3))
    disp3 = Displacement3D(mesh=slab2, values=u3)
    bd3 = energy_3d(slab2, phase3, disp3, 0.5, spec, load)
    naive3 = naive_energy_3d(slab2, phase3.values, disp3.values, 0.5, spec, load)
    dev3 = abs(bd3.total - naive3[3])
    results.append(
        _check("double-assembly", dev2 <= 1e-12 * max(1.0, abs(bd2.total)) and dev3 <= 1e-12 * max(1.0, abs(bd3.total)),
               f"planar dev {dev2:.3e}, slab dev {dev3:.3e}")
    )

    if spec.is_quadratic_pair:
        mesh_small = PlanarMesh(2, 4, config.lx, config.ly)
        _, bd_ex = solve_limit(mesh_small, spec, load, 0.5, exhaustive=True, u_tol=1e-10, u_maxiter=2000)
        oracle_val, _ = exhaustive_phase_minimum(mesh_small, spec, load, 0.5)
        dev = abs(bd_ex.total - oracle_val)
        results.append(_check("exhaustive-oracle", dev <= 1e-9, f"deviation {dev:.3e}"))

        mesh44 = PlanarMesh(4, 4, config.lx, config.ly)
        from .densities import LoadField, kohn_strang_spec

        flat_spec = kohn_strang_spec(1.0, 1.0 + 1e-12)
        _, bd_perim = solve_limit(
            mesh44, flat_spec, LoadField.zero(), 0.5, seeds=tuple(range(6)), alternations=6
        )
        oracle_perim = exhaustive_balanced_interface(mesh44, 0.5)
        results.append(
            _check("pure-perimeter-optimum", abs(bd_perim.total - oracle_perim) <= 1e-9,
                   f"solver {bd_perim.total:.12g} vs enumeration {oracle_perim:.12g}")
        )

    # exactness of the transverse-uniform bookkeeping needs a load whose
    # layer-midpoint sum equals its analytic transverse integral
    from .densities import LoadField as _LoadField
    from .solve2d import DesignState2D

    lift_load = _LoadField.constant([0.1, 0.0, -1.0])
    bd2_lift = energy_2d(mesh2, phase2, disp2, spec, lift_load)
    lifted_phase, lifted_disp = lift_planar_state(
        slab2, DesignState2D(mesh2, phase2, disp2, bd2_lift)
    )
    bd_lift = energy_3d(slab2, lifted_phase, lifted_disp, 0.5, spec, lift_load)
    dev_lift = abs(bd_lift.total - bd2_lift.total)
    results.append(
        _check("planar-equality-uniform-states",
               dev_lift <= 1e-12 * max(1.0, abs(bd2_lift.total)),
               f"deviation {dev_lift:.3e}")
    )

    slab_det = SlabMesh(PlanarMesh(4, 4, config.lx, config.ly), layers=2)
    _, det_a = minimize_eps(slab_det, 0.5, spec, load, 0.5, seeds=(config.seed,), alternations=2)
    _, det_b = minimize_eps(slab_det, 0.5, spec, load, 0.5, seeds=(config.seed,), alternations=2)
    results.append(
        _check("rerun-determinism", det_a.total == det_b.total and det_a.bulk == det_b.bulk,
               f"totals {det_a.total:.17g} / {det_b.total:.17g}")
    )

    passed = all(r["passed"] for r in results)
    if write:
        write_validation_report(out, results, environment_stamp(config.seed), config_echo(config))
    return results, passed
