"""Bulk phase energies, their membrane reduction, and growth validation.

Phase energies act on 3x3 deformation gradients F. Writing F = (Fbar | c)
with Fbar the 3x2 in-plane block and c the transverse column, the membrane
reduction minimizes over c, producing a density on 3x2 matrices. Every
built-in family admits a closed-form reduction; custom densities fall back
to a deterministic multistart descent whose search radius comes from the
growth certificate.

A two-phase spec selects between the phase energies through a binary label
chi (chi = 1 picks phase 1) and carries the certificate (beta_lower,
beta_upper, p) of the coercivity/growth sandwich

    beta_lower * (|F|^p - 1) <= W_i(F) <= beta_upper * (1 + |F|^p).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .errors import DomainError

# Float guard for mathematically non-strict inequalities checked by sampling.
GROWTH_SLACK = 1e-9

# Inner minimization over the transverse column (non-analytic densities).
REDUCE_GTOL = 1e-8
REDUCE_MAXITER = 500
REDUCE_STARTS = 8


def frob2(a: np.ndarray) -> np.ndarray:
    """Squared Frobenius norm over the trailing two axes."""
    return np.sum(np.square(a), axis=(-2, -1))


def compose_full(fbar: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Assemble F = (Fbar | c) from the in-plane block and transverse column."""
    fbar = np.asarray(fbar, dtype=float)
    c = np.asarray(c, dtype=float)
    return np.concatenate([fbar, c[..., :, None]], axis=-1)


def check_matrix(a, shape, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape[-2:] != shape:
        raise DomainError(f"{name} must have trailing shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} contains non-finite entries")
    return a


def check_phase_label(chi) -> int:
    if float(chi) not in (0.0, 1.0):
        raise DomainError(f"phase label must be 0 or 1, got {chi}")
    return int(chi)


# ---------------------------------------------------------------------------
# Phase energy families
# ---------------------------------------------------------------------------

class PhaseEnergy:
    """A single hyperelastic phase energy W on 3x3 matrices.

    Subclasses provide vectorized evaluation on stacked matrices plus the
    membrane-reduced density on 3x2 matrices. `convex` marks families that
    are certified convex (so every envelope of the reduced density equals
    the density itself); `radial` marks families depending on |F| only.
    """

    convex = False
    radial = False
    analytic_reduction = True

    def full(self, f: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def full_grad(self, f: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def membrane(self, fbar: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def membrane_grad(self, fbar: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def membrane_argmin(self, fbar: np.ndarray) -> np.ndarray:
        """One minimizing transverse column for a single 3x2 point."""
        raise NotImplementedError

    def natural_exponent(self) -> float:
        """Growth exponent for which the sandwich admits finite constants."""
        raise NotImplementedError

    def suggested_certificate(self) -> tuple[float, float, float]:
        """A valid (beta_lower, beta_upper, p) for this family alone."""
        raise NotImplementedError


@dataclass(frozen=True)
class IsotropicQuadratic(PhaseEnergy):
    """W(F) = alpha * |F|^2."""

    alpha: float
    convex = True
    radial = True

    def __post_init__(self):
        if self.alpha <= 0:
            raise DomainError("alpha must be positive")

    def full(self, f):
        return self.alpha * frob2(f)

    def full_grad(self, f):
        return 2.0 * self.alpha * np.asarray(f, dtype=float)

    def membrane(self, fbar):
        return self.alpha * frob2(fbar)

    def membrane_grad(self, fbar):
        return 2.0 * self.alpha * np.asarray(fbar, dtype=float)

    def membrane_argmin(self, fbar):
        return np.zeros(3)

    def natural_exponent(self):
        return 2.0

    def suggested_certificate(self):
        return self.alpha, self.alpha, 2.0


@dataclass(frozen=True)
class PowerLaw(PhaseEnergy):
    """W(F) = alpha * |F|^p with p > 1."""

    alpha: float
    p: float
    convex = True
    radial = True

    def __post_init__(self):
        if self.alpha <= 0 or self.p <= 1:
            raise DomainError("need alpha > 0 and p > 1")

    def full(self, f):
        return self.alpha * frob2(f) ** (self.p / 2.0)

    def full_grad(self, f):
        f = np.asarray(f, dtype=float)
        s = frob2(f)
        scale = np.where(s > 0, self.alpha * self.p * s ** (self.p / 2.0 - 1.0), 0.0)
        return scale[..., None, None] * f

    def membrane(self, fbar):
        return self.alpha * frob2(fbar) ** (self.p / 2.0)

    def membrane_grad(self, fbar):
        fbar = np.asarray(fbar, dtype=float)
        s = frob2(fbar)
        scale = np.where(s > 0, self.alpha * self.p * s ** (self.p / 2.0 - 1.0), 0.0)
        return scale[..., None, None] * fbar

    def membrane_argmin(self, fbar):
        return np.zeros(3)

    def natural_exponent(self):
        return self.p

    def suggested_certificate(self):
        return self.alpha, self.alpha, self.p


@dataclass(frozen=True, eq=False)
class ShiftedQuadratic(PhaseEnergy):
    """W(F) = alpha * |F - A|^2 around a single 3x3 center A."""

    center: np.ndarray
    alpha: float = 1.0
    convex = True

    def __post_init__(self):
        object.__setattr__(self, "center", check_matrix(self.center, (3, 3), "center"))
        if self.alpha <= 0:
            raise DomainError("alpha must be positive")

    def full(self, f):
        return self.alpha * frob2(np.asarray(f, dtype=float) - self.center)

    def full_grad(self, f):
        return 2.0 * self.alpha * (np.asarray(f, dtype=float) - self.center)

    def membrane(self, fbar):
        return self.alpha * frob2(np.asarray(fbar, dtype=float) - self.center[:, :2])

    def membrane_grad(self, fbar):
        return 2.0 * self.alpha * (np.asarray(fbar, dtype=float) - self.center[:, :2])

    def membrane_argmin(self, fbar):
        return self.center[:, 2].copy()

    def natural_exponent(self):
        return 2.0

    def suggested_certificate(self):
        # Valid only for |A| < 1: the sandwich forces the zero set into the
        # closed unit ball. Derived by minimizing the ratio along rays.
        a = float(np.sqrt(frob2(self.center)))
        if a >= 1.0:
            raise DomainError("no valid lower growth constant when the center leaves the unit ball")
        return self.alpha * (1.0 - a * a), self.alpha * (1.0 + a * a), 2.0


@dataclass(frozen=True, eq=False)
class TwoWell(PhaseEnergy):
    """W(F) = alpha * min(|F - A_plus|^2, |F - A_minus|^2)."""

    well_plus: np.ndarray
    well_minus: np.ndarray
    alpha: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "well_plus", check_matrix(self.well_plus, (3, 3), "well_plus"))
        object.__setattr__(self, "well_minus", check_matrix(self.well_minus, (3, 3), "well_minus"))
        if self.alpha <= 0:
            raise DomainError("alpha must be positive")

    def full(self, f):
        f = np.asarray(f, dtype=float)
        return self.alpha * np.minimum(frob2(f - self.well_plus), frob2(f - self.well_minus))

    def full_grad(self, f):
        f = np.asarray(f, dtype=float)
        dp = f - self.well_plus
        dm = f - self.well_minus
        pick_plus = frob2(dp) <= frob2(dm)
        return 2.0 * self.alpha * np.where(pick_plus[..., None, None], dp, dm)

    def membrane(self, fbar):
        fbar = np.asarray(fbar, dtype=float)
        return self.alpha * np.minimum(
            frob2(fbar - self.well_plus[:, :2]), frob2(fbar - self.well_minus[:, :2])
        )

    def membrane_grad(self, fbar):
        fbar = np.asarray(fbar, dtype=float)
        dp = fbar - self.well_plus[:, :2]
        dm = fbar - self.well_minus[:, :2]
        pick_plus = frob2(dp) <= frob2(dm)
        return 2.0 * self.alpha * np.where(pick_plus[..., None, None], dp, dm)

    def membrane_argmin(self, fbar):
        fbar = np.asarray(fbar, dtype=float)
        dplus = frob2(fbar - self.well_plus[:, :2])
        dminus = frob2(fbar - self.well_minus[:, :2])
        well = self.well_plus if dplus <= dminus else self.well_minus
        return well[:, 2].copy()

    def natural_exponent(self):
        return 2.0

    def suggested_certificate(self):
        a = max(float(np.sqrt(frob2(self.well_plus))), float(np.sqrt(frob2(self.well_minus))))
        if a >= 1.0:
            raise DomainError("no valid lower growth constant when a well leaves the unit ball")
        return self.alpha * (1.0 - a * a), self.alpha * (1.0 + a * a), 2.0


@dataclass(frozen=True)
class QuarticWell(PhaseEnergy):
    """W(F) = (|F|^2 - r^2)^2, vanishing on the sphere of radius r."""

    radius: float = 1.0
    radial = True

    def __post_init__(self):
        if not 0 < self.radius <= 1:
            raise DomainError("well radius must lie in (0, 1] for a valid growth sandwich")

    def full(self, f):
        return (frob2(f) - self.radius**2) ** 2

    def full_grad(self, f):
        f = np.asarray(f, dtype=float)
        return 4.0 * (frob2(f) - self.radius**2)[..., None, None] * f

    def membrane(self, fbar):
        # inf over c of (|Fbar|^2 + |c|^2 - r^2)^2 fills the deficit when possible
        excess = np.maximum(frob2(fbar) - self.radius**2, 0.0)
        return excess**2

    def membrane_grad(self, fbar):
        fbar = np.asarray(fbar, dtype=float)
        excess = np.maximum(frob2(fbar) - self.radius**2, 0.0)
        return 4.0 * excess[..., None, None] * fbar

    def membrane_argmin(self, fbar):
        deficit = max(self.radius**2 - float(frob2(np.asarray(fbar, dtype=float))), 0.0)
        return np.array([0.0, 0.0, np.sqrt(deficit)])

    def natural_exponent(self):
        return 4.0

    def suggested_certificate(self):
        r4 = self.radius**4
        lower = 1.0 - r4 if self.radius < 1.0 else 0.0
        if lower <= 0.0:
            # wells on the unit sphere leave no slack; nudge just inside instead
            raise DomainError("radius 1 admits no positive lower growth constant")
        return lower, max(1.0, r4), 4.0


@dataclass(frozen=True, eq=False)
class CustomDensity(PhaseEnergy):
    """User-supplied density: a vectorized callable on stacked 3x3 matrices.

    No closed-form reduction; `reduce_membrane` runs the numeric inner
    minimization. An optional gradient callable speeds the descent up.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray] | None = None
    label: str = "custom"
    analytic_reduction = False

    def full(self, f):
        return np.asarray(self.fn(np.asarray(f, dtype=float)), dtype=float)

    def full_grad(self, f):
        if self.grad is None:
            raise DomainError(f"density {self.label!r} has no gradient callable")
        return np.asarray(self.grad(np.asarray(f, dtype=float)), dtype=float)

    def natural_exponent(self):
        raise DomainError(f"density {self.label!r} carries no intrinsic exponent")

    def suggested_certificate(self):
        raise DomainError(f"density {self.label!r} requires a user-supplied certificate")


# ---------------------------------------------------------------------------
# Two-phase spec and its operations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BulkDensitySpec:
    """Pair of phase energies with their shared growth certificate."""

    w1: PhaseEnergy
    w2: PhaseEnergy
    beta_lower: float
    beta_upper: float
    p: float

    def __post_init__(self):
        if not (0 < self.beta_lower <= self.beta_upper):
            raise DomainError("need 0 < beta_lower <= beta_upper")
        if self.p <= 1:
            raise DomainError("growth exponent must exceed 1")

    def phase(self, which: int) -> PhaseEnergy:
        if which == 1:
            return self.w1
        if which == 2:
            return self.w2
        raise DomainError(f"phase index must be 1 or 2, got {which}")

    @property
    def both_convex(self) -> bool:
        return self.w1.convex and self.w2.convex

    @property
    def both_radial(self) -> bool:
        return self.w1.radial and self.w2.radial

    @property
    def is_quadratic_pair(self) -> bool:
        return isinstance(self.w1, IsotropicQuadratic) and isinstance(self.w2, IsotropicQuadratic)


def kohn_strang_spec(alpha_soft: float = 1.0, alpha_hard: float = 2.0) -> BulkDensitySpec:
    """Quadratic pair alpha_soft*|.|^2 (phase 1) and alpha_hard*|.|^2 (phase 2).

    For this pair the relaxed two-phase membrane density is the selection
    itself, which makes it the closed-form benchmark of the whole pipeline.
    """
    if not 0 < alpha_soft < alpha_hard:
        raise DomainError("need 0 < alpha_soft < alpha_hard")
    return BulkDensitySpec(
        w1=IsotropicQuadratic(alpha_soft),
        w2=IsotropicQuadratic(alpha_hard),
        beta_lower=alpha_soft,
        beta_upper=alpha_hard,
        p=2.0,
    )


def eval_full(spec: BulkDensitySpec, chi, f) -> float:
    """Two-phase bulk density chi*W1(F) + (1-chi)*W2(F) at a binary label."""
    chi = check_phase_label(chi)
    f = check_matrix(f, (3, 3), "F")
    w = spec.w1 if chi == 1 else spec.w2
    return float(w.full(f))


@dataclass(frozen=True, eq=False)
class MembraneReduction:
    """Result of minimizing W(Fbar | c) over the transverse column c.

    `converged` is False when the descent hit its iteration cap with a
    gradient above tolerance; the value is then an upper bound only.
    """

    value: float
    argmin: np.ndarray
    converged: bool = True


def reduce_membrane(spec: BulkDensitySpec, phase: int, fbar) -> MembraneReduction:
    """Membrane-reduced phase density inf_c W_phase(Fbar | c) with its argmin."""
    fbar = check_matrix(fbar, (3, 2), "Fbar")
    w = spec.phase(phase)
    if w.analytic_reduction:
        c = np.asarray(w.membrane_argmin(fbar), dtype=float)
        return MembraneReduction(value=float(w.membrane(fbar)), argmin=c, converged=True)
    return _reduce_numeric(spec, w, fbar)


def _reduce_numeric(spec: BulkDensitySpec, w: PhaseEnergy, fbar: np.ndarray) -> MembraneReduction:
    # Any minimizer obeys |c|^p <= (beta/beta') (1 + |Fbar|^p) + 1: compare the
    # coercivity bound at c with the growth bound at c = 0.
    s = float(np.sqrt(frob2(fbar)))
    radius = ((spec.beta_upper / spec.beta_lower) * (1.0 + s**spec.p) + 1.0) ** (1.0 / spec.p)

    def objective(c):
        return float(w.full(compose_full(fbar, c)))

    half = radius / np.sqrt(3.0)
    starts = [
        np.array([sx * half, sy * half, sz * half])
        for sx in (-1.0, 1.0)
        for sy in (-1.0, 1.0)
        for sz in (-1.0, 1.0)
    ]
    assert len(starts) == REDUCE_STARTS

    best_val = np.inf
    best_c = starts[0]
    best_ok = False
    for c0 in starts:
        res = optimize.minimize(
            objective,
            c0,
            method="BFGS",
            options={"gtol": REDUCE_GTOL, "maxiter": REDUCE_MAXITER},
        )
        # flag only the cap-hit-with-nonstationary-gradient case; an early stop
        # at finite-difference noise is still a converged local minimum
        ok = res.nit < REDUCE_MAXITER or bool(
            np.max(np.abs(res.jac)) <= REDUCE_GTOL * (1.0 + abs(res.fun))
        )
        if res.fun < best_val:
            best_val, best_c, best_ok = float(res.fun), np.asarray(res.x, dtype=float), ok
    return MembraneReduction(value=best_val, argmin=best_c, converged=best_ok)


def eval_membrane(spec: BulkDensitySpec, chi, fbar) -> float:
    """Reduced two-phase density chi*Wbar1(Fbar) + (1-chi)*Wbar2(Fbar)."""
    chi = check_phase_label(chi)
    return reduce_membrane(spec, 1 if chi == 1 else 2, fbar).value


# Vectorized two-phase selection used by the solvers. chi is a {0,1} array
# broadcast against stacked membrane gradients.

def membrane_values(spec: BulkDensitySpec, chi: np.ndarray, fbar: np.ndarray) -> np.ndarray:
    v1 = spec.w1.membrane(fbar)
    v2 = spec.w2.membrane(fbar)
    return np.where(chi == 1, v1, v2)


def membrane_values_and_grads(spec, chi, fbar):
    v1 = spec.w1.membrane(fbar)
    v2 = spec.w2.membrane(fbar)
    g1 = spec.w1.membrane_grad(fbar)
    g2 = spec.w2.membrane_grad(fbar)
    sel = (chi == 1)[..., None, None]
    return np.where(chi == 1, v1, v2), np.where(sel, g1, g2)


def full_values(spec: BulkDensitySpec, chi: np.ndarray, f: np.ndarray) -> np.ndarray:
    v1 = spec.w1.full(f)
    v2 = spec.w2.full(f)
    return np.where(chi == 1, v1, v2)


def full_values_and_grads(spec, chi, f):
    v1 = spec.w1.full(f)
    v2 = spec.w2.full(f)
    g1 = spec.w1.full_grad(f)
    g2 = spec.w2.full_grad(f)
    sel = (chi == 1)[..., None, None]
    return np.where(chi == 1, v1, v2), np.where(sel, g1, g2)


# ---------------------------------------------------------------------------
# Growth validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GrowthReport:
    """Sampled verdict on the growth sandwich and the label-Lipschitz bound."""

    passed: bool
    worst_margin: float
    margins: dict
    witness: dict | None
    sample_count: int
    radius: float
    seed: int


def _ball_samples(rng: np.random.Generator, count: int, shape: tuple, radius: float) -> np.ndarray:
    dim = int(np.prod(shape))
    raw = rng.standard_normal((count, dim))
    raw /= np.maximum(np.linalg.norm(raw, axis=1, keepdims=True), 1e-300)
    radii = radius * rng.random(count) ** (1.0 / dim)
    return (raw * radii[:, None]).reshape((count, *shape))


def validate_growth(spec: BulkDensitySpec, sample_count: int, radius: float, seed: int) -> GrowthReport:
    """Check the growth sandwich on deterministic pseudo-random samples.

    Draws matrices in the ball of the given radius and asserts, for both
    phases, the full-gradient sandwich, the membrane sandwich for the
    reduced two-phase density at both labels, and the label-Lipschitz bound
    |Vbar(1,.) - Vbar(0,.)| <= 2*beta_upper*(1 + |Fbar|^p).
    """
    if sample_count < 1:
        raise DomainError("sample_count must be at least 1")
    if radius <= 0:
        raise DomainError("radius must be positive")
    rng = np.random.default_rng(seed)
    fs = _ball_samples(rng, sample_count, (3, 3), radius)
    fbars = _ball_samples(rng, sample_count, (3, 2), radius)

    bl, bu, p = spec.beta_lower, spec.beta_upper, spec.p
    margins: dict[str, float] = {}
    witness: dict | None = None
    worst = np.inf

    def record(name, margin_arr, points):
        nonlocal worst, witness
        idx = int(np.argmin(margin_arr))
        m = float(margin_arr[idx])
        margins[name] = m
        if m < worst:
            worst = m
            if m < -GROWTH_SLACK:
                witness = {
                    "check": name,
                    "margin": m,
                    "point": np.asarray(points[idx]).tolist(),
                }

    norms_p = frob2(fs) ** (p / 2.0)
    for name, w in (("w1", spec.w1), ("w2", spec.w2)):
        vals = w.full(fs)
        record(f"{name}_lower", vals - bl * (norms_p - 1.0), fs)
        record(f"{name}_upper", bu * (1.0 + norms_p) - vals, fs)

    mnorms_p = frob2(fbars) ** (p / 2.0)
    vbar1 = spec.w1.membrane(fbars) if spec.w1.analytic_reduction else np.array(
        [reduce_membrane(spec, 1, fb).value for fb in fbars]
    )
    vbar0 = spec.w2.membrane(fbars) if spec.w2.analytic_reduction else np.array(
        [reduce_membrane(spec, 2, fb).value for fb in fbars]
    )
    for chi, vals in ((1, vbar1), (0, vbar0)):
        record(f"vbar_lower_chi{chi}", vals - bl * (mnorms_p - 1.0), fbars)
        record(f"vbar_upper_chi{chi}", bu * (1.0 + mnorms_p) - vals, fbars)
    record("vbar_chi_lipschitz", 2.0 * bu * (1.0 + mnorms_p) - np.abs(vbar1 - vbar0), fbars)

    return GrowthReport(
        passed=bool(worst >= -GROWTH_SLACK),
        worst_margin=float(worst),
        margins=margins,
        witness=witness,
        sample_count=sample_count,
        radius=radius,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Loads
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LoadField:
    """Body load f on the slab: zero, constant, or polynomial in (x1, x2, x3).

    Polynomial terms are ((i, j, k), coefficient vector): the monomial
    x1^i x2^j x3^k scaled by a fixed R^3 vector. `transverse_integral`
    integrates x3 over (-1, 1) analytically, which is what the planar limit
    energy consumes.
    """

    kind: str = "zero"
    vector: np.ndarray = field(default_factory=lambda: np.zeros(3))
    terms: tuple = ()
    dual_exponent: float | None = None

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "polynomial"):
            raise DomainError(f"unknown load kind {self.kind!r}")
        object.__setattr__(self, "vector", np.asarray(self.vector, dtype=float).reshape(3))
        if not np.all(np.isfinite(self.vector)):
            raise DomainError("load vector must be finite")
        norm_terms = []
        for powers, coef in self.terms:
            i, j, k = (int(x) for x in powers)
            if min(i, j, k) < 0:
                raise DomainError("monomial powers must be non-negative")
            c = np.asarray(coef, dtype=float).reshape(3)
            if not np.all(np.isfinite(c)):
                raise DomainError("load coefficients must be finite")
            norm_terms.append(((i, j, k), c))
        object.__setattr__(self, "terms", tuple(norm_terms))

    @classmethod
    def zero(cls):
        return cls(kind="zero")

    @classmethod
    def constant(cls, vector):
        return cls(kind="constant", vector=vector)

    @classmethod
    def polynomial(cls, terms):
        return cls(kind="polynomial", terms=tuple(terms))

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Load vectors at stacked points (..., 3)."""
        points = np.asarray(points, dtype=float)
        if self.kind == "zero":
            return np.zeros(points.shape[:-1] + (3,))
        if self.kind == "constant":
            return np.broadcast_to(self.vector, points.shape[:-1] + (3,)).copy()
        out = np.zeros(points.shape[:-1] + (3,))
        x1, x2, x3 = points[..., 0], points[..., 1], points[..., 2]
        for (i, j, k), coef in self.terms:
            out += (x1**i * x2**j * x3**k)[..., None] * coef
        return out

    def transverse_integral(self, points_alpha: np.ndarray) -> np.ndarray:
        """Integral of f over x3 in (-1, 1) at stacked planar points (..., 2)."""
        points_alpha = np.asarray(points_alpha, dtype=float)
        if self.kind == "zero":
            return np.zeros(points_alpha.shape[:-1] + (3,))
        if self.kind == "constant":
            return 2.0 * np.broadcast_to(self.vector, points_alpha.shape[:-1] + (3,)).copy()
        out = np.zeros(points_alpha.shape[:-1] + (3,))
        x1, x2 = points_alpha[..., 0], points_alpha[..., 1]
        for (i, j, k), coef in self.terms:
            weight = 2.0 / (k + 1) if k % 2 == 0 else 0.0
            if weight:
                out += (weight * x1**i * x2**j)[..., None] * coef
        return out
