"""Planar limit problem: clamped membrane energy with a perimeter term.

Minimizes, over binary phase fields with an exact cell-count volume
constraint and displacements clamped on the whole boundary,

    2 * sum_cells area * density(chi, grad u)          (bulk)
  -   sum_cells area * <int_{-1}^{1} f dx3, u>         (load)
  + 2 * sum_{interface edges} length * psi(normal)     (perimeter)

where `density` is the reduced two-phase density, its closed relaxed form
(quadratic pairs), or a tabulated radial envelope, and psi is 1 for the
isotropic perimeter or a convexified planar surface density. Minimization
alternates descent in the displacement with volume-preserving phase swaps;
an exhaustive mode enumerates every feasible phase layout on small meshes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy import optimize

from .densities import BulkDensitySpec, LoadField, membrane_values, membrane_values_and_grads
from .envelope import laminate_upper_batch, cell_problem_upper
from .errors import DomainError
from .mesh import PlanarMesh
from .surface import PlanarSurfaceDensity
from .swaps import SwapGraph, improve_by_swaps

log = logging.getLogger(__name__)

DENSITY_MODES = ("raw-vbar", "closed-form-qvbar", "tabulated-envelope")


def exact_phase_count(n_cells: int, fraction: float) -> int:
    """Cell count for a volume fraction, rejecting non-representable targets."""
    if not 0.0 <= fraction <= 1.0:
        raise DomainError("volume fraction must lie in [0, 1]")
    target = fraction * n_cells
    count = int(round(target))
    if abs(target - count) > 1e-9:
        raise DomainError(f"fraction {fraction} is not a whole number of cells on {n_cells} cells")
    return count


@dataclass(eq=False)
class PhaseField2D:
    """Binary phase label per cell."""

    mesh: PlanarMesh
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != (self.mesh.n_cells,):
            raise DomainError("phase field shape does not match the mesh")
        if not np.isin(v, (0, 1)).all():
            raise DomainError("phase labels must be 0 or 1")
        self.values = v.astype(np.int8)

    @property
    def n_ones(self) -> int:
        return int(np.sum(self.values))

    @property
    def achieved_fraction(self) -> float:
        return self.n_ones / self.mesh.n_cells

    @classmethod
    def random_balanced(cls, mesh: PlanarMesh, fraction: float, seed: int) -> "PhaseField2D":
        count = exact_phase_count(mesh.n_cells, fraction)
        rng = np.random.default_rng(seed)
        v = np.zeros(mesh.n_cells, dtype=np.int8)
        v[rng.choice(mesh.n_cells, size=count, replace=False)] = 1
        return cls(mesh=mesh, values=v)

    @classmethod
    def from_ranking(cls, mesh: PlanarMesh, fraction: float, scores: np.ndarray) -> "PhaseField2D":
        """Phase 1 on the `count` lowest-score cells (ties by cell index)."""
        count = exact_phase_count(mesh.n_cells, fraction)
        order = np.lexsort((np.arange(mesh.n_cells), np.asarray(scores, dtype=float)))
        v = np.zeros(mesh.n_cells, dtype=np.int8)
        v[order[:count]] = 1
        return cls(mesh=mesh, values=v)


def structured_layouts(mesh: PlanarMesh, fraction: float) -> list[PhaseField2D]:
    """Deterministic multistart layouts: strips, a centered disk, and a ring.

    Random balanced fields rarely anneal into the large-scale layouts that
    minimize these energies; seeding the restarts with a few coherent
    shapes costs little and removes the worst local minima.
    """
    centers = mesh.cell_centers
    middle = np.array([mesh.lx / 2.0, mesh.ly / 2.0])
    dist = np.linalg.norm(centers - middle, axis=1)
    layouts = [
        PhaseField2D.from_ranking(mesh, fraction, centers[:, 0]),
        PhaseField2D.from_ranking(mesh, fraction, centers[:, 1]),
        PhaseField2D.from_ranking(mesh, fraction, dist),
        PhaseField2D.from_ranking(mesh, fraction, -dist),
    ]
    seen = set()
    unique = []
    for layout in layouts:
        key = layout.values.tobytes()
        if key not in seen:
            seen.add(key)
            unique.append(layout)
    return unique


@dataclass(eq=False)
class Displacement2D:
    """Nodal displacement vectors, exactly zero on the boundary."""

    mesh: PlanarMesh
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.mesh.n_nodes, 3):
            raise DomainError("displacement shape does not match the mesh")
        if np.any(v[self.mesh.boundary_nodes] != 0.0):
            raise DomainError("boundary displacements must be exactly zero")
        self.values = v

    @classmethod
    def zeros(cls, mesh: PlanarMesh) -> "Displacement2D":
        return cls(mesh=mesh, values=np.zeros((mesh.n_nodes, 3)))


@dataclass(frozen=True)
class EnergyBreakdown:
    """total = bulk - load + perimeter, by construction."""

    bulk: float
    load: float
    perimeter: float
    total: float
    constraint_residual: float = 0.0
    log: tuple = ()

    @classmethod
    def assemble(cls, bulk, load, perimeter, constraint_residual=0.0, log=()):
        return cls(
            bulk=float(bulk),
            load=float(load),
            perimeter=float(perimeter),
            total=float(bulk) - float(load) + float(perimeter),
            constraint_residual=float(constraint_residual),
            log=tuple(log),
        )


@dataclass(eq=False)
class DesignState2D:
    mesh: PlanarMesh
    phase: PhaseField2D
    displacement: Displacement2D
    breakdown: EnergyBreakdown


# ---------------------------------------------------------------------------
# Density modes
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RadialEnvelopeTable:
    """Envelope upper bounds of a radial reduced density, tabulated in |Fbar|."""

    radii: np.ndarray
    values: np.ndarray

    def covers(self, r: np.ndarray) -> np.ndarray:
        return r <= self.radii[-1] + 1e-12

    def value_and_slope(self, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        r = np.minimum(r, self.radii[-1])
        idx = np.clip(np.searchsorted(self.radii, r, side="right") - 1, 0, len(self.radii) - 2)
        r0, r1 = self.radii[idx], self.radii[idx + 1]
        v0, v1 = self.values[idx], self.values[idx + 1]
        slope = (v1 - v0) / (r1 - r0)
        return v0 + slope * (r - r0), slope


def build_radial_tables(
    spec: BulkDensitySpec, r_max: float, n_points: int = 65, depth: int = 2, cell_n: int = 4
) -> dict[int, RadialEnvelopeTable]:
    """Tabulate envelope upper bounds along a radial ray for radial densities."""
    if not spec.both_radial:
        raise DomainError("radial envelope tables require radial phase densities")
    direction = np.zeros((3, 2))
    direction[0, 0] = 1.0
    radii = np.linspace(0.0, r_max, n_points)
    tables = {}
    for phase in (1, 2):
        pts = radii[:, None, None] * direction
        lam = laminate_upper_batch(spec, phase, pts, depth=depth)
        cell = np.array([cell_problem_upper(spec, phase, p, cell_n).value for p in pts])
        tables[phase] = RadialEnvelopeTable(radii=radii, values=np.minimum(lam, cell))
    return tables


def _density_values(spec, chi, fbar, mode, tables, with_grad):
    if mode not in DENSITY_MODES:
        raise DomainError(f"unknown density mode {mode!r}")
    if mode == "closed-form-qvbar" and not spec.is_quadratic_pair:
        raise DomainError("closed-form relaxed density is only available for quadratic pairs")
    if mode == "tabulated-envelope":
        if tables is None:
            raise DomainError("tabulated-envelope mode needs prebuilt tables")
        radii = np.sqrt(np.sum(np.square(fbar), axis=(-2, -1)))
        covered = tables[1].covers(radii) & tables[2].covers(radii)
        if not np.all(covered):
            log.warning(
                "envelope table misses %d of %d gradients; falling back to the raw density there",
                int(np.sum(~covered)), radii.size,
            )
        v1, s1 = tables[1].value_and_slope(radii)
        v2, s2 = tables[2].value_and_slope(radii)
        vals = np.where(chi == 1, v1, v2)
        raw = membrane_values(spec, chi, fbar)
        vals = np.where(covered, vals, raw)
        if not with_grad:
            return vals
        slope = np.where(chi == 1, s1, s2)
        safe_r = np.where(radii > 0, radii, 1.0)
        grads = (slope / safe_r)[..., None, None] * fbar
        raw_g = membrane_values_and_grads(spec, chi, fbar)[1]
        grads = np.where(covered[..., None, None], grads, raw_g)
        return vals, grads
    # raw selection; for quadratic pairs the relaxed density coincides with it
    if with_grad:
        return membrane_values_and_grads(spec, chi, fbar)
    return membrane_values(spec, chi, fbar)


def _axis_weights(surface: PlanarSurfaceDensity | None) -> np.ndarray:
    if surface is None:
        return np.ones(2)
    return surface.envelope(np.array([[1.0, 0.0], [0.0, 1.0]]))


# ---------------------------------------------------------------------------
# Energy and its minimization
# ---------------------------------------------------------------------------

def _check_mesh(mesh, *objs):
    for o in objs:
        if o.mesh != mesh:
            raise DomainError("field mesh does not match the given mesh")


def energy_2d(
    mesh: PlanarMesh,
    phase: PhaseField2D,
    disp: Displacement2D,
    spec: BulkDensitySpec,
    load: LoadField,
    density_mode: str = "raw-vbar",
    surface: PlanarSurfaceDensity | None = None,
    tables: dict | None = None,
    target_fraction: float | None = None,
) -> EnergyBreakdown:
    """Assemble the planar limit energy of a state."""
    _check_mesh(mesh, phase, disp)
    fbar = mesh.cell_gradients(disp.values)
    dens = _density_values(spec, phase.values, fbar, density_mode, tables, with_grad=False)
    bulk = 2.0 * mesh.cell_area * float(np.sum(dens))

    f2 = load.transverse_integral(mesh.cell_centers)
    load_val = mesh.cell_area * float(np.sum(f2 * mesh.cell_values(disp.values)))

    edge_cells, edge_axis, edge_len = mesh.interior_edges
    active = phase.values[edge_cells[:, 0]] != phase.values[edge_cells[:, 1]]
    psi = _axis_weights(surface)
    perimeter = 2.0 * float(np.sum(edge_len[active] * psi[edge_axis[active]]))

    residual = 0.0
    if target_fraction is not None:
        residual = phase.achieved_fraction - target_fraction
    return EnergyBreakdown.assemble(bulk, load_val, perimeter, residual)


def minimize_u(
    mesh: PlanarMesh,
    phase: PhaseField2D,
    spec: BulkDensitySpec,
    load: LoadField,
    density_mode: str = "raw-vbar",
    surface: PlanarSurfaceDensity | None = None,
    tables: dict | None = None,
    tol: float = 1e-8,
    max_iter: int = 500,
    u0: Displacement2D | None = None,
) -> tuple[Displacement2D, EnergyBreakdown]:
    """Descend the bulk-load energy in the displacement at a frozen phase.

    Quasi-Newton descent with line search on the free nodal values; stops
    when the energy gradient max-norm drops below `tol` or at the iteration
    cap. The energy never increases: the better of the start and the final
    iterate is returned. A failed line search flags the result
    stationary-suspect in the breakdown log.
    """
    _check_mesh(mesh, phase)
    free = ~mesh.boundary_nodes
    n_free = int(np.count_nonzero(free))
    area = mesh.cell_area
    f2 = load.transverse_integral(mesh.cell_centers)
    chi = phase.values

    def fun(x):
        u = np.zeros((mesh.n_nodes, 3))
        u[free] = x.reshape(n_free, 3)
        fbar = mesh.cell_gradients(u)
        dens, dgrad = _density_values(spec, chi, fbar, density_mode, tables, with_grad=True)
        value = 2.0 * area * float(np.sum(dens)) - area * float(np.sum(f2 * mesh.cell_values(u)))
        g = np.zeros((mesh.n_nodes, 3))
        mesh.scatter_gradient_adjoint(2.0 * area * dgrad, g)
        mesh.scatter_value_adjoint(-area * f2, g)
        return value, g[free].ravel()

    x0 = (u0.values[free].ravel() if u0 is not None else np.zeros(3 * n_free)).copy()
    e0 = fun(x0)[0]
    res = optimize.minimize(
        fun, x0, jac=True, method="L-BFGS-B",
        options={"gtol": tol, "maxiter": max_iter, "maxfun": 50 * max_iter, "ftol": 1e-16},
    )
    suspect = "ABNORMAL" in str(res.message).upper()
    x, e = (res.x, float(res.fun)) if res.fun <= e0 else (x0, e0)
    u = np.zeros((mesh.n_nodes, 3))
    u[free] = x.reshape(n_free, 3)
    disp = Displacement2D(mesh=mesh, values=u)
    entries = [f"minimize_u: iters={res.nit} energy={e:.17g} converged={res.success}"]
    if suspect:
        entries.append("minimize_u: stationary-suspect (line search made no progress)")
    bd = energy_2d(mesh, phase, disp, spec, load, density_mode, surface, tables)
    return disp, EnergyBreakdown.assemble(
        bd.bulk, bd.load, bd.perimeter, bd.constraint_residual, log=tuple(entries)
    )


def _swap_graph(mesh: PlanarMesh, surface) -> SwapGraph:
    edge_cells, edge_axis, edge_len = mesh.interior_edges
    psi = _axis_weights(surface)
    return SwapGraph(
        n_cells=mesh.n_cells, edge_cells=edge_cells, edge_weight=2.0 * edge_len * psi[edge_axis]
    )


def update_phase(
    mesh: PlanarMesh,
    disp: Displacement2D,
    phase: PhaseField2D,
    target_fraction: float,
    spec: BulkDensitySpec,
    density_mode: str = "raw-vbar",
    surface: PlanarSurfaceDensity | None = None,
    tables: dict | None = None,
    sweep_seed: int = 0,
) -> PhaseField2D:
    """Improve the phase layout by volume-preserving pair swaps.

    The displacement is frozen, so per-cell bulk energies at both labels are
    precomputed once and swaps are scored incrementally. The phase cell
    count is preserved exactly; the energy strictly decreases across
    accepted swaps.
    """
    _check_mesh(mesh, phase, disp)
    expected = exact_phase_count(mesh.n_cells, target_fraction)
    if phase.n_ones != expected:
        raise DomainError("phase field violates the volume constraint")
    fbar = mesh.cell_gradients(disp.values)
    bulk_at = np.empty((mesh.n_cells, 2))
    for label in (0, 1):
        chi_all = np.full(mesh.n_cells, label, dtype=np.int8)
        bulk_at[:, label] = 2.0 * mesh.cell_area * _density_values(
            spec, chi_all, fbar, density_mode, tables, with_grad=False
        )
    outcome = improve_by_swaps(
        _swap_graph(mesh, surface), phase.values, bulk_at, np.random.default_rng(sweep_seed)
    )
    return PhaseField2D(mesh=mesh, values=outcome.chi)


def _alternate(mesh, phase, spec, load, density_mode, surface, tables, target_fraction,
               alternations, seed_seq, tol, u_tol, u_maxiter):
    disp = Displacement2D.zeros(mesh)
    disp, bd = minimize_u(mesh, phase, spec, load, density_mode, surface, tables,
                          tol=u_tol, max_iter=u_maxiter)
    history = [bd.total]
    for round_idx in range(alternations):
        sweep_seed = int(seed_seq.spawn(1)[0].generate_state(1)[0])
        phase = update_phase(mesh, disp, phase, target_fraction, spec, density_mode,
                             surface, tables, sweep_seed=sweep_seed)
        disp, bd = minimize_u(mesh, phase, spec, load, density_mode, surface, tables,
                              tol=u_tol, max_iter=u_maxiter, u0=disp)
        history.append(bd.total)
        if abs(history[-2] - history[-1]) <= tol:
            break
    return phase, disp, bd, history


def solve_limit(
    mesh: PlanarMesh,
    spec: BulkDensitySpec,
    load: LoadField,
    target_fraction: float,
    surface: PlanarSurfaceDensity | None = None,
    density_mode: str = "raw-vbar",
    alternations: int = 8,
    seeds: tuple = (0, 1, 2, 3),
    tol: float = 1e-9,
    tables: dict | None = None,
    exhaustive: bool = False,
    init_phase: PhaseField2D | None = None,
    u_tol: float = 1e-8,
    u_maxiter: int = 500,
) -> tuple[DesignState2D, EnergyBreakdown]:
    """Minimize the planar limit energy over phase layouts and displacements.

    Default mode alternates displacement descent with phase swaps from a
    multistart of seeded balanced layouts, reporting the best restart (a
    local minimum in general, flagged as such). Exhaustive mode enumerates
    every feasible layout instead and is the small-mesh ground truth.
    """
    count = exact_phase_count(mesh.n_cells, target_fraction)
    entries = []

    if exhaustive:
        best = None
        prev_u = None
        for combo in combinations(range(mesh.n_cells), count):
            values = np.zeros(mesh.n_cells, dtype=np.int8)
            values[list(combo)] = 1
            phase = PhaseField2D(mesh=mesh, values=values)
            disp, bd = minimize_u(mesh, phase, spec, load, density_mode, surface, tables,
                                  tol=u_tol, max_iter=u_maxiter, u0=prev_u)
            prev_u = disp
            if best is None or bd.total < best[2].total:
                best = (phase, disp, bd)
        phase, disp, bd = best
        entries.append(f"exhaustive search over {count}-cell layouts")
        final = EnergyBreakdown.assemble(
            bd.bulk, bd.load, bd.perimeter, phase.achieved_fraction - target_fraction, entries
        )
        return DesignState2D(mesh, phase, disp, final), final

    starts: list[tuple[str, PhaseField2D]] = []
    if init_phase is not None:
        starts.append(("given", init_phase))
    starts += [(f"structured {k}", ph) for k, ph in enumerate(structured_layouts(mesh, target_fraction))]
    starts += [(f"seed {seed}", PhaseField2D.random_balanced(mesh, target_fraction, seed)) for seed in seeds]

    best = None
    for restart_idx, (label, phase0) in enumerate(starts):
        seed_seq = np.random.SeedSequence(entropy=int(seeds[0]) if seeds else 0,
                                          spawn_key=(restart_idx,))
        phase, disp, bd, history = _alternate(
            mesh, phase0, spec, load, density_mode, surface, tables, target_fraction,
            alternations, seed_seq, tol, u_tol, u_maxiter,
        )
        entries.append(
            f"restart {restart_idx} ({label}): total={bd.total:.17g} "
            f"alternation history {['%.12g' % h for h in history]}"
        )
        if best is None or bd.total < best[2].total:
            best = (phase, disp, bd)
    entries.append("best restart reported; local minimum in general")
    phase, disp, bd = best
    final = EnergyBreakdown.assemble(
        bd.bulk, bd.load, bd.perimeter, phase.achieved_fraction - target_fraction, entries
    )
    return DesignState2D(mesh, phase, disp, final), final
