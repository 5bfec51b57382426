"""Experiment configuration: a documented key-value file under [experiment].

Values are JSON where they are structured (lists, matrices) and plain
scalars otherwise. Density, surface, and load entries start with a kind
token followed by key=value parameters, e.g.

    w1 = two-well alpha=1.0 well=[[0.75,0,0],[0,0,0],[0,0,0]]
    surface = weighted-quadratic w=[1.0,4.0,2.0]
    load = constant f=[0,0,-1]

Bracketed values must not contain spaces. `growth = auto` derives the
certificate from the built-in families; explicit form:
`growth = beta_lower=1.0 beta_upper=2.0 p=2.0`.
"""

from __future__ import annotations

import configparser
import json
import re
from dataclasses import dataclass, field

import numpy as np

from .densities import (
    BulkDensitySpec,
    IsotropicQuadratic,
    LoadField,
    PowerLaw,
    QuarticWell,
    ShiftedQuadratic,
    TwoWell,
)
from .errors import ConfigError
from .mesh import PlanarMesh, SlabMesh
from .surface import Euclidean, LpNorm, SurfaceDensity, WeightedQuadratic

_KV_RE = re.compile(r"(\w+)=(\[[^\s]*\]|[^\s]+)")

CONVENTIONS = ("lambda", "half-lambda")


def _parse_kind_params(text: str) -> tuple[str, dict]:
    parts = text.strip().split(None, 1)
    kind = parts[0]
    params = {}
    if len(parts) > 1:
        for key, raw in _KV_RE.findall(parts[1]):
            try:
                params[key] = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"cannot parse {key}={raw!r}: {exc}") from exc
    return kind, params


def _build_phase(text: str):
    kind, p = _parse_kind_params(text)
    try:
        if kind == "isotropic-quadratic":
            return IsotropicQuadratic(alpha=float(p.get("alpha", 1.0)))
        if kind == "p-power":
            return PowerLaw(alpha=float(p.get("alpha", 1.0)), p=float(p["p"]))
        if kind == "shifted-quadratic":
            return ShiftedQuadratic(center=np.array(p["center"], dtype=float),
                                    alpha=float(p.get("alpha", 1.0)))
        if kind == "two-well":
            well = np.array(p["well"], dtype=float)
            well_minus = np.array(p["well_minus"], dtype=float) if "well_minus" in p else -well
            return TwoWell(well_plus=well, well_minus=well_minus, alpha=float(p.get("alpha", 1.0)))
        if kind == "quartic-well":
            return QuarticWell(radius=float(p.get("radius", 0.9)))
    except KeyError as exc:
        raise ConfigError(f"density {kind!r} misses parameter {exc}") from exc
    raise ConfigError(f"unknown density kind {kind!r}")


def _build_surface(text: str) -> SurfaceDensity | None:
    kind, p = _parse_kind_params(text)
    if kind in ("none", "isotropic"):
        return None
    if kind == "euclidean":
        return Euclidean()
    if kind == "weighted-quadratic":
        return WeightedQuadratic(weights=np.array(p["w"], dtype=float))
    if kind == "lp-norm":
        return LpNorm(q=float(p["q"]))
    raise ConfigError(f"unknown surface kind {kind!r}")


def _build_load(text: str) -> LoadField:
    kind, p = _parse_kind_params(text)
    if kind == "zero":
        return LoadField.zero()
    if kind == "constant":
        return LoadField.constant(np.array(p["f"], dtype=float))
    if kind == "polynomial":
        return LoadField.polynomial([(tuple(t[0]), tuple(t[1])) for t in p["terms"]])
    raise ConfigError(f"unknown load kind {kind!r}")


@dataclass
class ExperimentConfig:
    nx: int = 16
    ny: int = 16
    lx: float = 1.0
    ly: float = 1.0
    layers: int = 4
    w1_text: str = "isotropic-quadratic alpha=1.0"
    w2_text: str = "isotropic-quadratic alpha=2.0"
    growth_text: str = "auto"
    surface_text: str = "none"
    load_text: str = "constant f=[0,0,-1]"
    target_fraction: float = 0.5
    convention: str = "lambda"
    eps_schedule: tuple = (1.0, 0.5, 0.25, 0.125, 0.0625)
    alternations: int = 6
    restarts: int = 4
    seed: int = 7
    tol: float = 1e-9
    u_tol: float = 1e-7
    u_maxiter: int = 1500
    density_mode: str = "auto"
    psibar_directions: int = 720
    envelope_grid: int = 7
    envelope_halfwidth: float = 1.2
    envelope_depth: int = 2
    envelope_cell_n: int = 4
    validation_samples: int = 10000
    init_phase_file: str = ""
    out_dir: str = "out"
    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.convention not in CONVENTIONS:
            raise ConfigError(f"convention must be one of {CONVENTIONS}")
        eps = tuple(float(e) for e in self.eps_schedule)
        if not eps:
            raise ConfigError("eps schedule must be non-empty")
        if any(e <= 0 for e in eps):
            raise ConfigError("eps schedule must be positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("eps schedule must be strictly decreasing")
        self.eps_schedule = eps
        if not 0.0 <= self.target_fraction <= 1.0:
            raise ConfigError("target fraction must lie in [0, 1]")
        if self.nx < 2 or self.ny < 2 or self.layers < 1:
            raise ConfigError("mesh sizes too small")
        # fail early on malformed specs
        self.build_bulk_spec()
        self.build_surface()
        self.build_load()

    # -- builders ----------------------------------------------------------

    def build_bulk_spec(self) -> BulkDensitySpec:
        w1 = _build_phase(self.w1_text)
        w2 = _build_phase(self.w2_text)
        if self.growth_text.strip() == "auto":
            lo1, hi1, p1 = w1.suggested_certificate()
            lo2, hi2, p2 = w2.suggested_certificate()
            if p1 != p2:
                raise ConfigError("phases have different growth exponents; supply an explicit certificate")
            lo, hi, p = min(lo1, lo2), max(hi1, hi2), p1
        else:
            _, params = _parse_kind_params("explicit " + self.growth_text)
            try:
                lo, hi, p = float(params["beta_lower"]), float(params["beta_upper"]), float(params["p"])
            except KeyError as exc:
                raise ConfigError(f"growth certificate misses {exc}") from exc
        try:
            return BulkDensitySpec(w1=w1, w2=w2, beta_lower=lo, beta_upper=hi, p=p)
        except Exception as exc:
            raise ConfigError(str(exc)) from exc

    def build_surface(self) -> SurfaceDensity | None:
        return _build_surface(self.surface_text)

    def build_load(self) -> LoadField:
        return _build_load(self.load_text)

    def planar_mesh(self) -> PlanarMesh:
        return PlanarMesh(self.nx, self.ny, self.lx, self.ly)

    def slab_mesh(self) -> SlabMesh:
        return SlabMesh(self.planar_mesh(), self.layers)

    def limit_fraction(self) -> float:
        """Planar volume fraction under the selected constraint convention."""
        return self.target_fraction if self.convention == "lambda" else 0.5 * self.target_fraction

    def effective_density_mode(self) -> str:
        if self.density_mode != "auto":
            return self.density_mode
        spec = self.build_bulk_spec()
        return "closed-form-qvbar" if spec.is_quadratic_pair else "raw-vbar"

    def restart_seeds(self) -> tuple:
        return tuple(int(s) for s in np.random.SeedSequence(self.seed).generate_state(self.restarts))


_INT_KEYS = {"nx", "ny", "layers", "alternations", "restarts", "seed", "u_maxiter",
             "psibar_directions", "envelope_grid", "envelope_cell_n", "envelope_depth",
             "validation_samples"}
_FLOAT_KEYS = {"lx", "ly", "target_fraction", "tol", "u_tol", "envelope_halfwidth"}
_TEXT_ALIASES = {"w1": "w1_text", "w2": "w2_text", "growth": "growth_text",
                 "surface": "surface_text", "load": "load_text"}


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Read an experiment file and apply CLI overrides (seed, out_dir, ...)."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    if "experiment" not in parser:
        raise ConfigError("config file needs an [experiment] section")
    section = parser["experiment"]
    kwargs: dict = {}
    raw: dict = {}
    for key, value in section.items():
        raw[key] = value
        if key in _TEXT_ALIASES:
            kwargs[_TEXT_ALIASES[key]] = value
        elif key in _INT_KEYS:
            kwargs[key] = int(value)
        elif key in _FLOAT_KEYS:
            kwargs[key] = float(value)
        elif key == "eps_schedule":
            kwargs[key] = tuple(json.loads(value))
        elif key in ("convention", "density_mode", "out_dir", "init_phase_file"):
            kwargs[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    if overrides:
        for key, value in overrides.items():
            if value is not None:
                kwargs[key] = value
                raw[f"override:{key}"] = str(value)
    try:
        return ExperimentConfig(raw=raw, **kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def config_echo(config: ExperimentConfig) -> dict:
    """Flat JSON-safe view of the configuration for reports."""
    echo = {
        k: (list(v) if isinstance(v, tuple) else v)
        for k, v in vars(config).items()
        if k != "raw"
    }
    echo["limit_fraction"] = config.limit_fraction()
    echo["effective_density_mode"] = config.effective_density_mode()
    return echo
