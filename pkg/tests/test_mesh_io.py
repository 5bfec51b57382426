"""Mesh index arrays, center gradients, and field dump round-trips."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from filmdesign.errors import DomainError
from filmdesign.io import read_field, write_cell_field_3d, write_node_field_2d
from filmdesign.mesh import PlanarMesh, SlabMesh


class TestPlanarMesh:
    def test_total_area(self):
        mesh = PlanarMesh(4, 3, 2.0, 1.5)
        assert mesh.n_cells * mesh.cell_area == pytest.approx(mesh.area)

    def test_interior_edges_have_two_cells(self):
        mesh = PlanarMesh(3, 3)
        edge_cells, axes, lengths = mesh.interior_edges
        assert len(edge_cells) == 2 * 3 * 2
        assert np.all(edge_cells[:, 0] != edge_cells[:, 1])

    def test_affine_gradient_is_exact(self):
        mesh = PlanarMesh(5, 4, 1.0, 2.0)
        a = np.array([[0.3, -0.7], [1.1, 0.2], [0.0, 0.5]])
        u = mesh.node_coords @ a.T  # u_k = a_k . x
        g = mesh.cell_gradients(u)
        assert np.max(np.abs(g - a)) < 1e-13

    def test_gradient_adjoint_consistency(self):
        mesh = PlanarMesh(3, 2)
        rng = np.random.default_rng(0)
        u = rng.standard_normal((mesh.n_nodes, 3))
        sens = rng.standard_normal((mesh.n_cells, 3, 2))
        lhs = float(np.sum(sens * mesh.cell_gradients(u)))
        out = np.zeros((mesh.n_nodes, 3))
        mesh.scatter_gradient_adjoint(sens, out)
        assert lhs == pytest.approx(float(np.sum(out * u)), rel=1e-12)

    def test_rejects_degenerate(self):
        with pytest.raises(DomainError):
            PlanarMesh(1, 4)


class TestSlabMesh:
    def test_volume_is_twice_the_area(self):
        slab = SlabMesh(PlanarMesh(4, 4), layers=3)
        assert slab.n_cells * slab.cell_volume == pytest.approx(slab.volume)

    def test_lateral_mask_leaves_faces_free(self):
        slab = SlabMesh(PlanarMesh(3, 3), layers=2)
        mask = slab.lateral_boundary_nodes
        coords = slab.node_coords
        interior_planar = (
            (coords[:, 0] > 0) & (coords[:, 0] < 1) & (coords[:, 1] > 0) & (coords[:, 1] < 1)
        )
        # interior planar columns are free at every layer, including top/bottom
        assert not np.any(mask[interior_planar])
        on_wall = ~interior_planar
        assert np.all(mask[on_wall])

    def test_affine_gradient_is_exact(self):
        slab = SlabMesh(PlanarMesh(3, 4, 1.5, 1.0), layers=3)
        a = np.array([[0.3, -0.7, 0.1], [1.1, 0.2, -0.4], [0.0, 0.5, 0.9]])
        u = slab.node_coords @ a.T
        g = slab.cell_gradients(u)
        assert np.max(np.abs(g - a)) < 1e-13

    def test_gradient_adjoint_consistency(self):
        slab = SlabMesh(PlanarMesh(2, 2), layers=2)
        rng = np.random.default_rng(1)
        u = rng.standard_normal((slab.n_nodes, 3))
        sens = rng.standard_normal((slab.n_cells, 3, 3))
        lhs = float(np.sum(sens * slab.cell_gradients(u)))
        out = np.zeros((slab.n_nodes, 3))
        slab.scatter_gradient_adjoint(sens, out)
        assert lhs == pytest.approx(float(np.sum(out * u)), rel=1e-12)

    def test_face_counts(self):
        slab = SlabMesh(PlanarMesh(3, 2), layers=2)
        _, axes, _ = slab.interior_faces
        assert np.sum(axes == 0) == 2 * 2 * 2  # (nx-1) ny nz
        assert np.sum(axes == 1) == 3 * 1 * 2
        assert np.sum(axes == 2) == 3 * 2 * 1


class TestFieldDumps:
    @given(data=st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=12, max_size=12))
    @settings(max_examples=25, deadline=None)
    def test_cell_roundtrip_is_exact(self, tmp_path_factory, data):
        path = tmp_path_factory.mktemp("io") / "field.txt"
        values = np.array(data)
        write_cell_field_3d(path, 2, 3, 2, values)
        kind, dims, back = read_field(path)
        assert kind == "cells" and dims == (2, 3, 2)
        assert np.array_equal(back, values)

    def test_node_roundtrip(self, tmp_path):
        rng = np.random.default_rng(2)
        values = rng.standard_normal((4 * 3, 3))
        path = tmp_path / "u.txt"
        write_node_field_2d(path, 3, 2, values)
        kind, dims, back = read_field(path)
        assert kind == "nodes" and dims == (3, 2)
        assert np.array_equal(back, values)
