"""Bulk density evaluation, membrane reduction, and growth validation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from filmdesign.densities import (
    BulkDensitySpec,
    IsotropicQuadratic,
    LoadField,
    PowerLaw,
    QuarticWell,
    ShiftedQuadratic,
    compose_full,
    eval_full,
    eval_membrane,
    frob2,
    kohn_strang_spec,
    reduce_membrane,
    validate_growth,
)
from filmdesign.errors import DomainError
from filmdesign.oracles import grid_search_transverse

matrices32 = st.lists(
    st.floats(-2.0, 2.0, allow_nan=False), min_size=6, max_size=6
).map(lambda v: np.array(v).reshape(3, 2))
vectors3 = st.lists(
    st.floats(-2.0, 2.0, allow_nan=False), min_size=3, max_size=3
).map(np.array)


def padded_identity():
    f = np.zeros((3, 3))
    f[0, 0] = f[1, 1] = 1.0
    return f


class TestEvalFull:
    def test_selects_phase_one(self, ks_spec):
        assert eval_full(ks_spec, 1, padded_identity()) == 2.0

    def test_selects_phase_two(self, ks_spec):
        assert eval_full(ks_spec, 0, padded_identity()) == 4.0

    def test_quartic_well_vanishes_on_the_well(self):
        w = QuarticWell(1.0)
        spec = BulkDensitySpec(w1=w, w2=IsotropicQuadratic(1.0), beta_lower=0.5, beta_upper=2.0, p=4.0)
        f = np.zeros((3, 3))
        f[0, 0] = 1.0
        assert eval_full(spec, 1, f) == 0.0

    def test_rejects_non_finite(self, ks_spec):
        f = np.full((3, 3), np.nan)
        with pytest.raises(DomainError):
            eval_full(ks_spec, 1, f)

    def test_rejects_intermediate_label(self, ks_spec):
        with pytest.raises(DomainError):
            eval_full(ks_spec, 0.5, np.eye(3))


class TestReduceMembrane:
    def test_quadratic_minimizes_at_zero_column(self):
        spec = kohn_strang_spec(2.0, 3.0)
        fbar = np.zeros((3, 2))
        fbar[0, 0] = fbar[1, 1] = 1.0  # |Fbar|^2 = 2
        res = reduce_membrane(spec, 1, fbar)
        assert res.value == pytest.approx(4.0, abs=1e-15)
        assert np.all(res.argmin == 0.0)
        assert res.converged

    def test_shifted_quadratic_decouples(self):
        center = np.arange(9, dtype=float).reshape(3, 3) / 20.0
        w = ShiftedQuadratic(center, alpha=1.0)
        spec = BulkDensitySpec(w1=w, w2=w, beta_lower=0.1, beta_upper=5.0, p=2.0)
        fbar = np.ones((3, 2)) * 0.3
        res = reduce_membrane(spec, 1, fbar)
        assert res.value == pytest.approx(float(frob2(fbar - center[:, :2])), abs=1e-15)
        assert np.allclose(res.argmin, center[:, 2])

    def test_quartic_fills_the_deficit(self, quartic_spec):
        w = QuarticWell(1.0)
        spec = BulkDensitySpec(w1=w, w2=w, beta_lower=0.5, beta_upper=2.0, p=4.0)
        fbar = np.zeros((3, 2))
        fbar[0, 0] = 0.5
        res = reduce_membrane(spec, 1, fbar)
        assert res.value == 0.0
        assert np.dot(res.argmin, res.argmin) == pytest.approx(0.75, abs=1e-12)

    def test_numeric_reduction_matches_grid_oracle(self, aniso_quartic_spec, aniso_quartic_density):
        # brute-force oracle: dense c-grid with local refinement
        rng = np.random.default_rng(5)
        for _ in range(2):
            fbar = 0.6 * rng.standard_normal((3, 2))
            oracle_val, _ = grid_search_transverse(aniso_quartic_density, fbar)
            res = reduce_membrane(aniso_quartic_spec, 1, fbar)
            assert res.converged
            assert res.value == pytest.approx(oracle_val, abs=1e-6)

    @given(fbar=matrices32, c=vectors3)
    @settings(max_examples=50, deadline=None)
    def test_reduction_dominance(self, two_well_spec, fbar, c):
        for chi, phase in ((1, 1), (0, 2)):
            red = reduce_membrane(two_well_spec, phase, fbar)
            full = eval_full(two_well_spec, chi, compose_full(fbar, c))
            assert red.value <= full + 1e-9


class TestEvalMembrane:
    def test_phase_selection(self, ks_spec):
        fbar = np.zeros((3, 2))
        fbar[0, 0] = fbar[1, 1] = 1.0
        assert eval_membrane(ks_spec, 0, fbar) == pytest.approx(4.0)
        assert eval_membrane(ks_spec, 1, fbar) == pytest.approx(2.0)

    def test_two_well_vanishes_at_a_well(self, two_well_spec):
        fbar = 0.75 * np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]])
        assert eval_membrane(two_well_spec, 1, fbar) == 0.0


class TestValidateGrowth:
    def test_kohn_strang_passes(self, ks_spec):
        report = validate_growth(ks_spec, sample_count=10_000, radius=3.0, seed=11)
        assert report.passed
        assert report.witness is None

    def test_corrupted_lower_constant_fails_with_witness(self):
        spec = BulkDensitySpec(
            w1=IsotropicQuadratic(1.0), w2=IsotropicQuadratic(2.0),
            beta_lower=3.0, beta_upper=3.0, p=2.0,
        )
        report = validate_growth(spec, sample_count=10_000, radius=3.0, seed=11)
        assert not report.passed
        assert report.witness is not None
        assert "lower" in report.witness["check"]

    def test_two_well_certificate_passes(self, two_well_spec):
        # constants certified from the closed-form bounds along rays
        report = validate_growth(two_well_spec, sample_count=10_000, radius=4.0, seed=3)
        assert report.passed

    def test_power_law_passes(self):
        w = PowerLaw(1.5, 2.5)
        spec = BulkDensitySpec(w1=w, w2=PowerLaw(2.0, 2.5), beta_lower=1.5, beta_upper=2.0, p=2.5)
        report = validate_growth(spec, sample_count=5_000, radius=3.0, seed=4)
        assert report.passed

    def test_reports_are_deterministic(self, two_well_spec):
        a = validate_growth(two_well_spec, sample_count=2_000, radius=3.0, seed=9)
        b = validate_growth(two_well_spec, sample_count=2_000, radius=3.0, seed=9)
        assert a == b  # bit-identical margins and verdict

    def test_rejects_empty_sample(self, ks_spec):
        with pytest.raises(DomainError):
            validate_growth(ks_spec, sample_count=0, radius=1.0, seed=0)


class TestSelectionAndLipschitz:
    @given(fbar=matrices32)
    @settings(max_examples=80, deadline=None)
    def test_chi_lipschitz_bound(self, two_well_spec, fbar):
        v1 = eval_membrane(two_well_spec, 1, fbar)
        v0 = eval_membrane(two_well_spec, 0, fbar)
        bound = 2.0 * two_well_spec.beta_upper * (1.0 + frob2(fbar) ** (two_well_spec.p / 2.0))
        assert abs(v1 - v0) <= bound + 1e-9

    @given(entries=st.lists(st.floats(-3.0, 3.0, allow_nan=False), min_size=9, max_size=9))
    @settings(max_examples=60, deadline=None)
    def test_selection_identity(self, two_well_spec, entries):
        f = np.array(entries).reshape(3, 3)
        assert eval_full(two_well_spec, 1, f) == float(two_well_spec.w1.full(f))
        assert eval_full(two_well_spec, 0, f) == float(two_well_spec.w2.full(f))


class TestLoadField:
    def test_constant_transverse_integral_doubles(self):
        f = LoadField.constant([0.0, 0.0, -1.0])
        out = f.transverse_integral(np.array([[0.5, 0.5]]))
        assert np.allclose(out, [[0.0, 0.0, -2.0]])

    def test_polynomial_odd_powers_cancel(self):
        f = LoadField.polynomial([((0, 0, 1), (1.0, 0.0, 0.0)), ((1, 0, 2), (0.0, 1.0, 0.0))])
        out = f.transverse_integral(np.array([[2.0, 0.0]]))
        # x3 integrates to zero; x1 * x3^2 integrates to x1 * 2/3
        assert np.allclose(out, [[0.0, 2.0 * 2.0 / 3.0, 0.0]])

    def test_evaluate_matches_monomials(self):
        f = LoadField.polynomial([((1, 1, 1), (0.0, 0.0, 2.0))])
        pts = np.array([[1.0, 2.0, 3.0], [0.5, 0.5, -1.0]])
        assert np.allclose(f.evaluate(pts), [[0, 0, 12.0], [0, 0, -0.5]])


class TestGradientComposition:
    def test_compose_blocks_land_in_their_columns(self):
        fbar = np.arange(6, dtype=float).reshape(3, 2)
        c = np.array([7.0, 8.0, 9.0])
        f = compose_full(fbar, c)
        assert f.shape == (3, 3)
        assert np.array_equal(f[:, :2], fbar)
        assert np.array_equal(f[:, 2], c)

    def test_compose_broadcasts_over_stacks(self):
        fbar = np.random.default_rng(0).standard_normal((5, 3, 2))
        c = np.random.default_rng(1).standard_normal((5, 3))
        f = compose_full(fbar, c)
        assert f.shape == (5, 3, 3)
        assert np.array_equal(f[..., :2], fbar)
        assert np.array_equal(f[..., 2], c)
