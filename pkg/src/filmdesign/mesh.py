"""Uniform rectangle and slab meshes with the index arrays the solvers use.

The planar mesh covers omega = [0, lx] x [0, ly] with nx x ny cells; the
slab mesh extrudes it over the fixed transverse interval (-1, 1). Cell and
node indices are row-major with x fastest, layers slowest. Gradients are
evaluated at cell centers (one-point quadrature), where the bilinear and
trilinear center gradients coincide with the cell averages.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class PlanarMesh:
    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise DomainError("need at least 2 cells per direction")
        if self.lx <= 0 or self.ly <= 0:
            raise DomainError("side lengths must be positive")

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @cached_property
    def node_coords(self) -> np.ndarray:
        xs = np.linspace(0.0, self.lx, self.nx + 1)
        ys = np.linspace(0.0, self.ly, self.ny + 1)
        gx, gy = np.meshgrid(xs, ys, indexing="xy")  # row-major: y slow, x fast
        return np.stack([gx.ravel(), gy.ravel()], axis=-1)

    @cached_property
    def cell_centers(self) -> np.ndarray:
        xs = (np.arange(self.nx) + 0.5) * self.hx
        ys = (np.arange(self.ny) + 0.5) * self.hy
        gx, gy = np.meshgrid(xs, ys, indexing="xy")
        return np.stack([gx.ravel(), gy.ravel()], axis=-1)

    @cached_property
    def cell_nodes(self) -> np.ndarray:
        """Corner node ids per cell, ordered [00, 10, 01, 11]."""
        i = np.arange(self.nx)
        j = np.arange(self.ny)
        ii, jj = np.meshgrid(i, j, indexing="xy")
        n00 = jj * (self.nx + 1) + ii
        return np.stack(
            [n00, n00 + 1, n00 + self.nx + 1, n00 + self.nx + 2], axis=-1
        ).reshape(-1, 4)

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        i = np.arange(self.n_nodes) % (self.nx + 1)
        j = np.arange(self.n_nodes) // (self.nx + 1)
        return (i == 0) | (i == self.nx) | (j == 0) | (j == self.ny)

    @cached_property
    def interior_edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(edge_cells (E,2), normal_axis (E,), length (E,)) for interior edges."""
        cells = []
        axes = []
        lengths = []
        cid = lambda i, j: j * self.nx + i
        for j in range(self.ny):
            for i in range(self.nx - 1):
                cells.append((cid(i, j), cid(i + 1, j)))
                axes.append(0)
                lengths.append(self.hy)
        for j in range(self.ny - 1):
            for i in range(self.nx):
                cells.append((cid(i, j), cid(i, j + 1)))
                axes.append(1)
                lengths.append(self.hx)
        return np.array(cells), np.array(axes), np.array(lengths)

    def cell_gradients(self, u: np.ndarray) -> np.ndarray:
        """Membrane gradients (n_cells, 3, 2) of nodal vectors at cell centers."""
        c = u[self.cell_nodes]  # (n_cells, 4, 3)
        dx = (c[:, 1] - c[:, 0] + c[:, 3] - c[:, 2]) / (2.0 * self.hx)
        dy = (c[:, 2] - c[:, 0] + c[:, 3] - c[:, 1]) / (2.0 * self.hy)
        return np.stack([dx, dy], axis=-1)

    def cell_values(self, u: np.ndarray) -> np.ndarray:
        """Nodal vectors averaged to cell centers."""
        return u[self.cell_nodes].mean(axis=1)

    def scatter_gradient_adjoint(self, cell_grad_sens: np.ndarray, out: np.ndarray) -> None:
        """Accumulate d(sum)/d(u_nodes) given sensitivities wrt cell gradients."""
        gx = cell_grad_sens[..., 0] / (2.0 * self.hx)  # (n_cells, 3)
        gy = cell_grad_sens[..., 1] / (2.0 * self.hy)
        contrib = np.stack([-gx - gy, gx - gy, -gx + gy, gx + gy], axis=1)
        np.add.at(out, self.cell_nodes, contrib)

    def scatter_value_adjoint(self, cell_val_sens: np.ndarray, out: np.ndarray) -> None:
        contrib = np.repeat(cell_val_sens[:, None, :] / 4.0, 4, axis=1)
        np.add.at(out, self.cell_nodes, contrib)


@dataclass(frozen=True)
class SlabMesh:
    """Extrusion of a planar mesh over the transverse interval (-1, 1).

    Only the lateral boundary is clamped; the top and bottom faces are free.
    """

    base: PlanarMesh
    layers: int

    def __post_init__(self):
        if self.layers < 1:
            raise DomainError("need at least one transverse layer")

    @property
    def hz(self) -> float:
        return 2.0 / self.layers

    @property
    def cell_volume(self) -> float:
        return self.base.cell_area * self.hz

    @property
    def volume(self) -> float:
        return 2.0 * self.base.area

    @property
    def n_cells(self) -> int:
        return self.base.n_cells * self.layers

    @property
    def n_nodes(self) -> int:
        return self.base.n_nodes * (self.layers + 1)

    @cached_property
    def cell_nodes(self) -> np.ndarray:
        """Corner node ids per cell: bottom [00,10,01,11] then top."""
        bottom = self.base.cell_nodes  # (base cells, 4)
        per_layer = []
        for k in range(self.layers):
            lo = bottom + k * self.base.n_nodes
            hi = bottom + (k + 1) * self.base.n_nodes
            per_layer.append(np.concatenate([lo, hi], axis=1))
        return np.concatenate(per_layer, axis=0)

    @cached_property
    def cell_centers(self) -> np.ndarray:
        planar = self.base.cell_centers
        zs = -1.0 + (np.arange(self.layers) + 0.5) * self.hz
        out = np.empty((self.n_cells, 3))
        for k, z in enumerate(zs):
            sl = slice(k * self.base.n_cells, (k + 1) * self.base.n_cells)
            out[sl, :2] = planar
            out[sl, 2] = z
        return out

    @cached_property
    def node_coords(self) -> np.ndarray:
        planar = self.base.node_coords
        zs = np.linspace(-1.0, 1.0, self.layers + 1)
        out = np.empty((self.n_nodes, 3))
        for k, z in enumerate(zs):
            sl = slice(k * self.base.n_nodes, (k + 1) * self.base.n_nodes)
            out[sl, :2] = planar
            out[sl, 2] = z
        return out

    @cached_property
    def lateral_boundary_nodes(self) -> np.ndarray:
        return np.tile(self.base.boundary_nodes, self.layers + 1)

    @cached_property
    def interior_faces(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(face_cells (F,2), normal_axis (F,), area (F,)) for interior faces."""
        nx, ny, nz = self.base.nx, self.base.ny, self.layers
        cid = lambda i, j, k: (k * ny + j) * nx + i
        cells = []
        axes = []
        areas = []
        for k in range(nz):
            for j in range(ny):
                for i in range(nx - 1):
                    cells.append((cid(i, j, k), cid(i + 1, j, k)))
                    axes.append(0)
                    areas.append(self.base.hy * self.hz)
            for j in range(ny - 1):
                for i in range(nx):
                    cells.append((cid(i, j, k), cid(i, j + 1, k)))
                    axes.append(1)
                    areas.append(self.base.hx * self.hz)
        for k in range(nz - 1):
            for j in range(ny):
                for i in range(nx):
                    cells.append((cid(i, j, k), cid(i, j, k + 1)))
                    axes.append(2)
                    areas.append(self.base.hx * self.base.hy)
        return np.array(cells), np.array(axes), np.array(areas)

    def cell_gradients(self, u: np.ndarray) -> np.ndarray:
        """Full gradients (n_cells, 3, 3) of nodal vectors at cell centers."""
        c = u[self.cell_nodes]  # (n_cells, 8, 3)
        dx = (c[:, 1] - c[:, 0] + c[:, 3] - c[:, 2] + c[:, 5] - c[:, 4] + c[:, 7] - c[:, 6]) / (
            4.0 * self.base.hx
        )
        dy = (c[:, 2] - c[:, 0] + c[:, 3] - c[:, 1] + c[:, 6] - c[:, 4] + c[:, 7] - c[:, 5]) / (
            4.0 * self.base.hy
        )
        dz = (c[:, 4] - c[:, 0] + c[:, 5] - c[:, 1] + c[:, 6] - c[:, 2] + c[:, 7] - c[:, 3]) / (
            4.0 * self.hz
        )
        return np.stack([dx, dy, dz], axis=-1)

    def cell_values(self, u: np.ndarray) -> np.ndarray:
        return u[self.cell_nodes].mean(axis=1)

    def scatter_gradient_adjoint(self, cell_grad_sens: np.ndarray, out: np.ndarray) -> None:
        gx = cell_grad_sens[..., 0] / (4.0 * self.base.hx)
        gy = cell_grad_sens[..., 1] / (4.0 * self.base.hy)
        gz = cell_grad_sens[..., 2] / (4.0 * self.hz)
        contrib = np.stack(
            [
                -gx - gy - gz,
                gx - gy - gz,
                -gx + gy - gz,
                gx + gy - gz,
                -gx - gy + gz,
                gx - gy + gz,
                -gx + gy + gz,
                gx + gy + gz,
            ],
            axis=1,
        )
        np.add.at(out, self.cell_nodes, contrib)

    def scatter_value_adjoint(self, cell_val_sens: np.ndarray, out: np.ndarray) -> None:
        contrib = np.repeat(cell_val_sens[:, None, :] / 8.0, 8, axis=1)
        np.add.at(out, self.cell_nodes, contrib)
