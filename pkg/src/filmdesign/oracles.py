"""Independent brute-force references for the test and validation suites.

Everything here recomputes quantities the production paths produce, by a
different route: dense grid searches, exhaustive enumeration, direct linear
solves, and naive loop-based assembly. These stay deliberately simple and
share no code with the paths they check.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from .densities import BulkDensitySpec, LoadField, PhaseEnergy
from .errors import DomainError
from .mesh import PlanarMesh, SlabMesh
from .surface import SurfaceDensity


# ---------------------------------------------------------------------------
# Transverse-column grid search
# ---------------------------------------------------------------------------

def grid_search_transverse(
    density: PhaseEnergy,
    fbar: np.ndarray,
    half_width: float = 2.0,
    step: float = 1e-2,
    refine_rounds: int = 2,
) -> tuple[float, np.ndarray]:
    """Minimize W(Fbar | c) over a dense cube grid with local refinement."""
    fbar = np.asarray(fbar, dtype=float)
    axis = np.arange(-half_width, half_width + step / 2, step)
    n = len(axis)
    chunk = 1_000_000
    buf = np.empty((chunk, 3, 3))
    buf[:, :, :2] = fbar

    def scan_chunk(cols):
        buf[: len(cols), :, 2] = cols
        vals = density.full(buf[: len(cols)])
        k = int(np.argmin(vals))
        return float(vals[k]), k

    best_val, best_c = np.inf, np.zeros(3)
    for lo in range(0, n**3, chunk):
        idx = np.arange(lo, min(lo + chunk, n**3))
        cols = np.stack([axis[idx // (n * n)], axis[(idx // n) % n], axis[idx % n]], axis=-1)
        val, k = scan_chunk(cols)
        if val < best_val:
            best_val, best_c = val, cols[k].copy()
    width = step
    for _ in range(refine_rounds):
        local = np.linspace(-width, width, 21)
        cand = best_c + np.stack(np.meshgrid(local, local, local, indexing="ij"), axis=-1).reshape(-1, 3)
        val, k = scan_chunk(cand)
        if val < best_val:
            best_val, best_c = val, cand[k].copy()
        width /= 10.0
    return best_val, best_c


# ---------------------------------------------------------------------------
# Direct quadratic displacement solve
# ---------------------------------------------------------------------------

def _quadratic_alphas(spec: BulkDensitySpec) -> tuple[float, float]:
    if not spec.is_quadratic_pair:
        raise DomainError("direct solve requires a quadratic pair")
    return spec.w1.alpha, spec.w2.alpha


def _cell_b_matrices(mesh: PlanarMesh) -> np.ndarray:
    """Per-cell map from corner values [00,10,01,11] to the center gradient."""
    bx = np.array([-1.0, 1.0, -1.0, 1.0]) / (2.0 * mesh.hx)
    by = np.array([-1.0, -1.0, 1.0, 1.0]) / (2.0 * mesh.hy)
    return np.stack([bx, by])  # (2, 4)


def direct_quadratic_displacement(
    mesh: PlanarMesh, chi: np.ndarray, spec: BulkDensitySpec, load: LoadField
) -> tuple[np.ndarray, float]:
    """Solve the planar quadratic displacement problem by normal equations.

    Returns the nodal displacement and the bulk-minus-load energy at the
    solution. Components decouple, so one stiffness factorization serves
    all three right-hand sides.
    """
    a1, a2 = _quadratic_alphas(spec)
    alphas = np.where(np.asarray(chi) == 1, a1, a2)
    free = ~mesh.boundary_nodes
    free_index = -np.ones(mesh.n_nodes, dtype=int)
    free_index[free] = np.arange(int(np.count_nonzero(free)))
    nf = int(np.count_nonzero(free))

    b_mat = _cell_b_matrices(mesh)  # (2, 4)
    btb = b_mat.T @ b_mat  # (4, 4)
    a_dense = np.zeros((nf, nf))
    for c in range(mesh.n_cells):
        nodes = mesh.cell_nodes[c]
        block = 4.0 * mesh.cell_area * alphas[c] * btb
        for li, ni in enumerate(nodes):
            if free_index[ni] < 0:
                continue
            for lj, nj in enumerate(nodes):
                if free_index[nj] < 0:
                    continue
                a_dense[free_index[ni], free_index[nj]] += block[li, lj]

    f2 = load.transverse_integral(mesh.cell_centers)  # (n_cells, 3)
    rhs = np.zeros((nf, 3))
    for c in range(mesh.n_cells):
        for ni in mesh.cell_nodes[c]:
            if free_index[ni] >= 0:
                rhs[free_index[ni]] += mesh.cell_area * f2[c] / 4.0

    sol = np.linalg.solve(a_dense, rhs)
    u = np.zeros((mesh.n_nodes, 3))
    u[free] = sol
    energy = float(-0.5 * np.sum(rhs * sol))
    return u, energy


# ---------------------------------------------------------------------------
# Exhaustive phase enumeration
# ---------------------------------------------------------------------------

def _edge_weights_2d(mesh: PlanarMesh, psi_axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    edge_cells, edge_axis, edge_len = mesh.interior_edges
    return edge_cells, 2.0 * edge_len * psi_axis[edge_axis]


def exhaustive_phase_minimum(
    mesh: PlanarMesh,
    spec: BulkDensitySpec,
    load: LoadField,
    target_fraction: float,
    psi_axis: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Global minimum over all feasible phase layouts (quadratic pairs only).

    For each layout, the displacement problem is solved directly; the
    reported value is the full energy bulk - load + perimeter.
    """
    count = target_fraction * mesh.n_cells
    n_ones = int(round(count))
    if abs(count - n_ones) > 1e-9:
        raise DomainError("fraction is not representable by whole cells")
    if psi_axis is None:
        psi_axis = np.ones(2)
    edge_cells, weights = _edge_weights_2d(mesh, psi_axis)

    a1, a2 = _quadratic_alphas(spec)
    free = ~mesh.boundary_nodes
    nf = int(np.count_nonzero(free))
    free_index = -np.ones(mesh.n_nodes, dtype=int)
    free_index[free] = np.arange(nf)

    # per-cell stiffness contribution scattered to dense free-node blocks
    b_mat = _cell_b_matrices(mesh)
    btb = 4.0 * mesh.cell_area * (b_mat.T @ b_mat)
    cell_blocks = np.zeros((mesh.n_cells, nf, nf))
    for c in range(mesh.n_cells):
        nodes = mesh.cell_nodes[c]
        for li, ni in enumerate(nodes):
            if free_index[ni] < 0:
                continue
            for lj, nj in enumerate(nodes):
                if free_index[nj] < 0:
                    continue
                cell_blocks[c, free_index[ni], free_index[nj]] += btb[li, lj]

    f2 = load.transverse_integral(mesh.cell_centers)
    rhs = np.zeros((nf, 3))
    for c in range(mesh.n_cells):
        for ni in mesh.cell_nodes[c]:
            if free_index[ni] >= 0:
                rhs[free_index[ni]] += mesh.cell_area * f2[c] / 4.0

    best_val = np.inf
    best_chi = None
    no_load = not np.any(rhs)
    for combo in combinations(range(mesh.n_cells), n_ones):
        chi = np.zeros(mesh.n_cells, dtype=np.int8)
        chi[list(combo)] = 1
        perim = float(np.sum(weights[chi[edge_cells[:, 0]] != chi[edge_cells[:, 1]]]))
        if no_load:
            total = perim
        else:
            alphas = np.where(chi == 1, a1, a2)
            a_dense = np.tensordot(alphas, cell_blocks, axes=1)
            sol = np.linalg.solve(a_dense, rhs)
            total = float(-0.5 * np.sum(rhs * sol)) + perim
        if total < best_val:
            best_val = total
            best_chi = chi
    return best_val, best_chi


def exhaustive_balanced_interface(mesh: PlanarMesh, target_fraction: float,
                                  psi_axis: np.ndarray | None = None) -> float:
    """Minimal weighted interface over all feasible layouts (no bulk, no load)."""
    count = int(round(target_fraction * mesh.n_cells))
    if psi_axis is None:
        psi_axis = np.ones(2)
    edge_cells, weights = _edge_weights_2d(mesh, psi_axis)
    e0, e1 = edge_cells[:, 0], edge_cells[:, 1]
    best = np.inf
    for combo in combinations(range(mesh.n_cells), count):
        chi = np.zeros(mesh.n_cells, dtype=np.int8)
        chi[list(combo)] = 1
        best = min(best, float(np.sum(weights[chi[e0] != chi[e1]])))
    return best


# ---------------------------------------------------------------------------
# Naive loop-based energy assembly
# ---------------------------------------------------------------------------

def naive_energy_2d(mesh, chi, u, spec, load, psi_axis=None):
    """Scalar re-assembly of the planar energy, cell by cell and edge by edge."""
    if psi_axis is None:
        psi_axis = np.ones(2)
    bulk = 0.0
    load_val = 0.0
    for c in range(mesh.n_cells):
        n00, n10, n01, n11 = mesh.cell_nodes[c]
        fbar = np.zeros((3, 2))
        for comp in range(3):
            fbar[comp, 0] = (u[n10, comp] - u[n00, comp] + u[n11, comp] - u[n01, comp]) / (2 * mesh.hx)
            fbar[comp, 1] = (u[n01, comp] - u[n00, comp] + u[n11, comp] - u[n10, comp]) / (2 * mesh.hy)
        w = spec.w1 if chi[c] == 1 else spec.w2
        bulk += 2.0 * mesh.cell_area * float(w.membrane(fbar))
        center = mesh.cell_centers[c]
        f2 = load.transverse_integral(center[None])[0]
        umean = (u[n00] + u[n10] + u[n01] + u[n11]) / 4.0
        load_val += mesh.cell_area * float(np.dot(f2, umean))
    edge_cells, edge_axis, edge_len = mesh.interior_edges
    perim = 0.0
    for (a, b), axis, length in zip(edge_cells, edge_axis, edge_len):
        if chi[a] != chi[b]:
            perim += 2.0 * length * psi_axis[axis]
    return bulk, load_val, perim, bulk - load_val + perim


def naive_energy_3d(mesh: SlabMesh, chi, u, eps, spec, load, surface: SurfaceDensity | None = None):
    """Scalar re-assembly of the rescaled slab energy."""
    bulk = 0.0
    load_val = 0.0
    hx, hy, hz = mesh.base.hx, mesh.base.hy, mesh.hz
    for c in range(mesh.n_cells):
        nodes = mesh.cell_nodes[c]
        g = np.zeros((3, 3))
        for comp in range(3):
            vals = u[nodes, comp]
            g[comp, 0] = (vals[1] - vals[0] + vals[3] - vals[2] + vals[5] - vals[4] + vals[7] - vals[6]) / (4 * hx)
            g[comp, 1] = (vals[2] - vals[0] + vals[3] - vals[1] + vals[6] - vals[4] + vals[7] - vals[5]) / (4 * hy)
            g[comp, 2] = (vals[4] - vals[0] + vals[5] - vals[1] + vals[6] - vals[2] + vals[7] - vals[3]) / (4 * hz)
        g[:, 2] /= eps
        w = spec.w1 if chi[c] == 1 else spec.w2
        bulk += mesh.cell_volume * float(w.full(g))
        f = load.evaluate(mesh.cell_centers[c][None])[0]
        umean = u[nodes].mean(axis=0)
        load_val += mesh.cell_volume * float(np.dot(f, umean))
    face_cells, face_axis, face_area = mesh.interior_faces
    perim = 0.0
    for (a, b), axis, area in zip(face_cells, face_axis, face_area):
        if chi[a] != chi[b]:
            if surface is None:
                weight = 1.0 if axis < 2 else 1.0 / eps
            else:
                nu = np.zeros(3)
                nu[axis] = 1.0 if axis < 2 else 1.0 / eps
                weight = float(surface(nu))
            perim += area * weight
    return bulk, load_val, perim, bulk - load_val + perim


# ---------------------------------------------------------------------------
# Surface oracles
# ---------------------------------------------------------------------------

def brute_force_xi(spec: SurfaceDensity, eta, step: float = 1e-4) -> tuple[float, float]:
    """Dense 1D scan of the transverse reduction, with one refinement pass."""
    eta = np.asarray(eta, dtype=float).reshape(2)
    half = spec.comparability**2 * float(np.linalg.norm(eta)) + step
    xs = np.arange(-half, half + step / 2, step)
    nus = np.stack([np.full_like(xs, eta[0]), np.full_like(xs, eta[1]), xs], axis=-1)
    vals = spec(nus)
    k = int(np.argmin(vals))
    fine = np.linspace(xs[k] - step, xs[k] + step, 401)
    nus_f = np.stack([np.full_like(fine, eta[0]), np.full_like(fine, eta[1]), fine], axis=-1)
    vals_f = spec(nus_f)
    kf = int(np.argmin(vals_f))
    if vals_f[kf] < vals[k]:
        return float(vals_f[kf]), float(fine[kf])
    return float(vals[k]), float(xs[k])


def planar_hull_envelope(normals: np.ndarray, values: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """Convex envelope of a sampled 1-homogeneous planar density.

    Evaluates inf over two-point positive mixtures of the sampled rays: the
    epigraph of the envelope is a convex cone in R^3, whose boundary is
    generated by at most two extreme rays in this dimension.
    """
    normals = np.asarray(normals, dtype=float)
    values = np.asarray(values, dtype=float)
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    m = len(normals)
    ii, jj = np.triu_indices(m, k=1)
    cross_ij = normals[ii, 0] * normals[jj, 1] - normals[ii, 1] * normals[jj, 0]
    ok_pair = np.abs(cross_ij) > 1e-12
    ii, jj, cross_ij = ii[ok_pair], jj[ok_pair], cross_ij[ok_pair]

    out = np.empty(len(queries))
    for qi, q in enumerate(queries):
        mu_i = (q[0] * normals[jj, 1] - q[1] * normals[jj, 0]) / cross_ij
        mu_j = (normals[ii, 0] * q[1] - normals[ii, 1] * q[0]) / cross_ij
        feasible = (mu_i >= -1e-12) & (mu_j >= -1e-12)
        cand = mu_i[feasible] * values[ii[feasible]] + mu_j[feasible] * values[jj[feasible]]
        # rays through the query itself (single-generator mixtures)
        dots = normals @ q
        along = np.abs(normals[:, 0] * q[1] - normals[:, 1] * q[0]) <= 1e-12
        single = values[along & (dots > 0)] * np.linalg.norm(q)
        out[qi] = min(cand.min() if len(cand) else np.inf,
                      single.min() if len(single) else np.inf)
    return out
