"""Planar limit energy assembly, displacement descent, and phase swaps."""

import numpy as np
import pytest

from filmdesign.densities import LoadField, kohn_strang_spec
from filmdesign.errors import DomainError
from filmdesign.mesh import PlanarMesh
from filmdesign.oracles import (
    direct_quadratic_displacement,
    exhaustive_balanced_interface,
    naive_energy_2d,
)
from filmdesign.solve2d import (
    Displacement2D,
    EnergyBreakdown,
    PhaseField2D,
    energy_2d,
    minimize_u,
    solve_limit,
    update_phase,
)
from filmdesign.surface import Euclidean, convexify_planar


def left_half_phase(mesh):
    centers = mesh.cell_centers
    return PhaseField2D(mesh=mesh, values=(centers[:, 0] < mesh.lx / 2).astype(np.int8))


class TestEnergy2D:
    def test_zero_state_zero_energy(self, ks_spec):
        mesh = PlanarMesh(4, 4)
        phase = PhaseField2D(mesh=mesh, values=np.zeros(16, dtype=np.int8))
        disp = Displacement2D.zeros(mesh)
        bd = energy_2d(mesh, phase, disp, ks_spec, LoadField.zero())
        assert bd.bulk == bd.load == bd.perimeter == bd.total == 0.0

    def test_left_half_interface(self, ks_spec):
        mesh = PlanarMesh(4, 4)
        bd = energy_2d(mesh, left_half_phase(mesh), Displacement2D.zeros(mesh), ks_spec, LoadField.zero())
        assert bd.perimeter == pytest.approx(2.0, abs=1e-12)

    def test_euclidean_surface_matches_isotropic(self, ks_spec):
        mesh = PlanarMesh(4, 4)
        planar = convexify_planar(Euclidean(), m=720)
        rng = np.random.default_rng(0)
        values = np.zeros(16, dtype=np.int8)
        values[rng.choice(16, 8, replace=False)] = 1
        phase = PhaseField2D(mesh=mesh, values=values)
        u = np.zeros((mesh.n_nodes, 3))
        u[~mesh.boundary_nodes] = rng.standard_normal((np.count_nonzero(~mesh.boundary_nodes), 3))
        disp = Displacement2D(mesh=mesh, values=u)
        load = LoadField.constant([0.1, 0.0, -0.4])
        iso = energy_2d(mesh, phase, disp, ks_spec, load)
        aniso = energy_2d(mesh, phase, disp, ks_spec, load, surface=planar)
        assert aniso.total == pytest.approx(iso.total, abs=1e-9)

    def test_double_assembly_agreement(self, two_well_spec):
        mesh = PlanarMesh(3, 5, 1.3, 0.8)
        rng = np.random.default_rng(4)
        values = np.zeros(15, dtype=np.int8)
        values[rng.choice(15, 7, replace=False)] = 1
        phase = PhaseField2D(mesh=mesh, values=values)
        u = np.zeros((mesh.n_nodes, 3))
        u[~mesh.boundary_nodes] = 0.5 * rng.standard_normal((np.count_nonzero(~mesh.boundary_nodes), 3))
        disp = Displacement2D(mesh=mesh, values=u)
        load = LoadField.polynomial([((1, 0, 0), (0.0, 0.2, -1.0)), ((0, 1, 2), (0.3, 0.0, 0.0))])
        bd = energy_2d(mesh, phase, disp, two_well_spec, load)
        bulk, load_val, perim, total = naive_energy_2d(
            mesh, phase.values, disp.values, two_well_spec, load
        )
        assert bd.bulk == pytest.approx(bulk, abs=1e-12)
        assert bd.load == pytest.approx(load_val, abs=1e-12)
        assert bd.perimeter == pytest.approx(perim, abs=1e-12)
        assert bd.total == pytest.approx(total, abs=1e-12)

    def test_total_is_conserved(self):
        bd = EnergyBreakdown.assemble(1.25, 0.5, 2.0)
        assert bd.total == bd.bulk - bd.load + bd.perimeter

    def test_mesh_mismatch_rejected(self, ks_spec):
        mesh = PlanarMesh(4, 4)
        other = PlanarMesh(5, 4)
        phase = PhaseField2D(mesh=other, values=np.zeros(20, dtype=np.int8))
        with pytest.raises(DomainError):
            energy_2d(mesh, phase, Displacement2D.zeros(mesh), ks_spec, LoadField.zero())


class TestMinimizeU:
    def test_zero_load_stays_at_zero(self, ks_spec):
        mesh = PlanarMesh(4, 4)
        phase = left_half_phase(mesh)
        disp, bd = minimize_u(mesh, phase, ks_spec, LoadField.zero())
        assert np.all(disp.values == 0.0)
        assert bd.bulk == 0.0

    def test_matches_direct_linear_solve(self, ks_spec):
        mesh = PlanarMesh(8, 8)
        phase = left_half_phase(mesh)
        load = LoadField.constant([0.0, 0.0, -1.0])
        disp, bd = minimize_u(mesh, phase, ks_spec, load, tol=1e-10, max_iter=2000)
        _, oracle_energy = direct_quadratic_displacement(mesh, phase.values, ks_spec, load)
        assert bd.bulk - bd.load == pytest.approx(oracle_energy, abs=1e-8)

    def test_boundary_stays_clamped(self, ks_spec):
        mesh = PlanarMesh(5, 5)
        phase = left_half_phase(mesh)
        disp, _ = minimize_u(mesh, phase, ks_spec, LoadField.constant([1.0, 0.5, -2.0]))
        assert np.all(disp.values[mesh.boundary_nodes] == 0.0)

    def test_energy_never_increases(self, two_well_spec):
        mesh = PlanarMesh(4, 4)
        phase = left_half_phase(mesh)
        load = LoadField.constant([0.0, 0.0, -0.5])
        rng = np.random.default_rng(3)
        u0 = np.zeros((mesh.n_nodes, 3))
        u0[~mesh.boundary_nodes] = rng.standard_normal((np.count_nonzero(~mesh.boundary_nodes), 3))
        start = Displacement2D(mesh=mesh, values=u0)
        e_start = energy_2d(mesh, phase, start, two_well_spec, load).total
        _, bd = minimize_u(mesh, phase, two_well_spec, load, u0=start)
        assert bd.total <= e_start + 1e-12


class TestUpdatePhase:
    def test_pure_perimeter_reaches_local_minimum(self, ks_spec):
        # equal phases, no load: only the interface counts
        spec = kohn_strang_spec(1.0, 1.0 + 1e-12)
        mesh = PlanarMesh(4, 4)
        phase = PhaseField2D.random_balanced(mesh, 0.5, seed=8)
        disp = Displacement2D.zeros(mesh)
        new = update_phase(mesh, disp, phase, 0.5, spec, sweep_seed=5)
        assert new.n_ones == 8
        e_new = energy_2d(mesh, new, disp, spec, LoadField.zero()).total
        e_old = energy_2d(mesh, phase, disp, spec, LoadField.zero()).total
        assert e_new <= e_old

    def test_full_fraction_has_no_swaps(self, ks_spec):
        mesh = PlanarMesh(3, 3)
        phase = PhaseField2D(mesh=mesh, values=np.ones(9, dtype=np.int8))
        new = update_phase(mesh, Displacement2D.zeros(mesh), phase, 1.0, ks_spec, sweep_seed=0)
        assert np.array_equal(new.values, phase.values)

    def test_fraction_violation_rejected(self, ks_spec):
        mesh = PlanarMesh(4, 4)
        phase = PhaseField2D.random_balanced(mesh, 0.5, seed=1)
        with pytest.raises(DomainError):
            update_phase(mesh, Displacement2D.zeros(mesh), phase, 0.25, ks_spec, sweep_seed=0)


class TestSolveLimit:
    def test_pure_perimeter_reaches_exhaustive_optimum(self):
        spec = kohn_strang_spec(1.0, 1.0 + 1e-12)
        mesh = PlanarMesh(4, 4)
        state, bd = solve_limit(
            mesh, spec, LoadField.zero(), 0.5, seeds=(0, 1, 2, 3, 4, 5), alternations=6
        )
        oracle = exhaustive_balanced_interface(mesh, 0.5)
        assert bd.total == pytest.approx(oracle, abs=1e-9)

    def test_zero_fraction_is_pure_phase_two(self, ks_spec):
        mesh = PlanarMesh(4, 4)
        load = LoadField.constant([0.0, 0.0, -1.0])
        state, bd = solve_limit(mesh, ks_spec, load, 0.0, seeds=(0,), alternations=2)
        assert state.phase.n_ones == 0
        disp, direct = minimize_u(mesh, state.phase, ks_spec, load)
        assert bd.total == pytest.approx(direct.total, abs=1e-10)

    def test_exhaustive_mode_on_tiny_mesh(self, ks_spec):
        mesh = PlanarMesh(2, 2)
        load = LoadField.constant([0.0, 0.0, -1.0])
        state, bd = solve_limit(mesh, ks_spec, load, 0.5, exhaustive=True)
        from filmdesign.oracles import exhaustive_phase_minimum

        oracle_val, _ = exhaustive_phase_minimum(mesh, ks_spec, load, 0.5)
        assert bd.total == pytest.approx(oracle_val, abs=1e-9)

    def test_reruns_are_bit_identical(self, ks_spec):
        mesh = PlanarMesh(6, 6)
        load = LoadField.constant([0.0, 0.0, -1.0])
        _, a = solve_limit(mesh, ks_spec, load, 0.5, seeds=(0, 1), alternations=3)
        _, b = solve_limit(mesh, ks_spec, load, 0.5, seeds=(0, 1), alternations=3)
        assert a.total == b.total and a.bulk == b.bulk and a.perimeter == b.perimeter

    def test_infeasible_fraction_rejected(self, ks_spec):
        mesh = PlanarMesh(3, 3)
        with pytest.raises(DomainError):
            solve_limit(mesh, ks_spec, LoadField.zero(), 0.5)


class TestDensityModes:
    def test_closed_form_mode_matches_raw_for_quadratic_pair(self, ks_spec):
        mesh = PlanarMesh(4, 4)
        phase = left_half_phase(mesh)
        rng = np.random.default_rng(1)
        u = np.zeros((mesh.n_nodes, 3))
        u[~mesh.boundary_nodes] = rng.standard_normal((np.count_nonzero(~mesh.boundary_nodes), 3))
        disp = Displacement2D(mesh=mesh, values=u)
        load = LoadField.constant([0.0, 0.0, -1.0])
        raw = energy_2d(mesh, phase, disp, ks_spec, load, density_mode="raw-vbar")
        closed = energy_2d(mesh, phase, disp, ks_spec, load, density_mode="closed-form-qvbar")
        assert closed.total == raw.total

    def test_closed_form_mode_rejects_non_quadratic(self, two_well_spec):
        mesh = PlanarMesh(4, 4)
        phase = left_half_phase(mesh)
        with pytest.raises(DomainError):
            energy_2d(mesh, phase, Displacement2D.zeros(mesh), two_well_spec,
                      LoadField.zero(), density_mode="closed-form-qvbar")

    def test_tabulated_mode_covers_and_falls_back(self, quartic_spec, caplog):
        from filmdesign.solve2d import build_radial_tables

        tables = build_radial_tables(quartic_spec, r_max=3.0, n_points=33, depth=1, cell_n=2)
        mesh = PlanarMesh(4, 4)
        phase = left_half_phase(mesh)
        disp = Displacement2D.zeros(mesh)
        bd = energy_2d(mesh, phase, disp, quartic_spec, LoadField.zero(),
                       density_mode="tabulated-envelope", tables=tables)
        assert np.isfinite(bd.total)
        # out-of-range gradients fall back to the raw density with a warning
        big = np.zeros((mesh.n_nodes, 3))
        interior = ~mesh.boundary_nodes
        big[interior] = 4.0 * np.random.default_rng(0).standard_normal((np.count_nonzero(interior), 3))
        disp_big = Displacement2D(mesh=mesh, values=big)
        with caplog.at_level("WARNING"):
            energy_2d(mesh, phase, disp_big, quartic_spec, LoadField.zero(),
                      density_mode="tabulated-envelope", tables=tables)
        assert any("falling back" in r.message for r in caplog.records)

    def test_tabulated_mode_requires_tables(self, quartic_spec):
        mesh = PlanarMesh(4, 4)
        with pytest.raises(DomainError):
            energy_2d(mesh, left_half_phase(mesh), Displacement2D.zeros(mesh),
                      quartic_spec, LoadField.zero(), density_mode="tabulated-envelope")


class TestAlternationChain:
    def test_energy_monotone_across_both_operations(self, ks_spec):
        mesh = PlanarMesh(6, 6)
        load = LoadField.constant([0.0, 0.0, -1.0])
        phase = PhaseField2D.random_balanced(mesh, 0.5, seed=2)
        disp = Displacement2D.zeros(mesh)
        totals = [energy_2d(mesh, phase, disp, ks_spec, load).total]
        for round_idx in range(3):
            disp, bd = minimize_u(mesh, phase, ks_spec, load, u0=disp)
            totals.append(bd.total)
            phase = update_phase(mesh, disp, phase, 0.5, ks_spec, sweep_seed=round_idx)
            totals.append(energy_2d(mesh, phase, disp, ks_spec, load).total)
        for a, b in zip(totals, totals[1:]):
            assert b <= a + 1e-12
