"""Scenario configuration: strict JSON schema, cross-constraint validation.

Every key is checked against the schema (unknown keys are rejected with the
offending name), and all cross-constraints are verified before any compute:
configuration-box margins, the grid-point cap, and the functional time-step
accuracy guidance (overridable with stepping.allow_loose_dt).
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError
from .funcdyn import build_functional_hamiltonian, suggested_dt_max
from .funcspace import ConfigGrid, build_config_grid
from .grids import LatticeField, PhysicsParams, SpatialGrid, build_spatial_grid
from .modschrod import MODE_STANDARD, MODES
from .potentials import PotentialSpec
from .qcorr import (CONVENTION_AS_PRINTED, CONVENTION_EXACT, MODE_INTEGRAL,
                    MODE_LOCAL, QBAR_ANTICOMMUTATOR, QBAR_DIRECT)


def _require_keys(section: dict, name: str, required, optional):
    unknown = set(section) - set(required) - set(optional)
    if unknown:
        raise ConfigurationError(
            f"unknown key(s) in '{name}' section: {', '.join(sorted(unknown))}")
    missing = set(required) - set(section)
    if missing:
        raise ConfigurationError(
            f"missing key(s) in '{name}' section: {', '.join(sorted(missing))}")


def _positive(value, name):
    if not (isinstance(value, (int, float)) and np.isfinite(value) and value > 0):
        raise ConfigurationError(f"'{name}' must be a positive finite number, got {value!r}")
    return float(value)


def _nonneg_int(value, name):
    if not isinstance(value, int) or value < 0:
        raise ConfigurationError(f"'{name}' must be a non-negative integer, got {value!r}")
    return value


@dataclass
class FunctionalSection:
    sites: int = 1
    spacing: float = 1.0
    boundary: str = "periodic"
    half_width: float = 4.0
    points: int = 256
    center: np.ndarray = field(default_factory=lambda: np.zeros(1, dtype=complex))
    width: float = 1.0
    coupling: str = MODE_INTEGRAL
    qbar_mode: str = QBAR_ANTICOMMUTATOR
    convention: str = CONVENTION_EXACT
    frozen: bool = False
    dt: Optional[float] = None


@dataclass
class ScenarioConfig:
    grid: SpatialGrid
    potential: PotentialSpec
    initial_kind: str
    initial_center: float
    initial_width: float
    initial_momentum: float
    initial_mode_index: int
    mode: str
    dt: float
    t_end: float
    output_stride: int
    functional_scheme: str
    allow_loose_dt: bool
    functional: Optional[FunctionalSection]
    traj_count: int
    traj_seed: int
    traj_interpolation: str
    traj_substeps: int
    out_dir: Optional[str]
    formats: tuple
    raw_text: str = ""

    @property
    def params(self) -> PhysicsParams:
        return PhysicsParams()

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def initial_field(self) -> LatticeField:
        x = self.grid.coordinates
        if self.initial_kind == "gaussian":
            vals = np.exp(-(x - self.initial_center) ** 2 / (4 * self.initial_width ** 2)
                          + 1j * self.initial_momentum * x)
        else:  # plane_wave
            k = 2.0 * np.pi * self.initial_mode_index / self.grid.extent
            vals = np.exp(1j * k * x)
        vals = vals / np.sqrt(self.grid.spacing * np.sum(np.abs(vals) ** 2))
        return LatticeField(self.grid, vals)

    def functional_lattice(self) -> SpatialGrid:
        f = self.functional
        return build_spatial_grid(f.sites, f.spacing, 0.0, f.boundary)

    def config_grid(self) -> ConfigGrid:
        f = self.functional
        return build_config_grid(self.functional_lattice(), f.half_width, f.points)

    @property
    def functional_dt(self) -> float:
        if self.functional is None or self.functional.dt is None:
            return self.dt
        return self.functional.dt


def _parse_potential(section) -> PotentialSpec:
    _require_keys(section, "potential", ["form"],
                  ["value", "spring", "center", "height", "left", "right",
                   "values", "times"])
    form = section["form"]
    kwargs = {}
    for key in ("value", "spring", "center", "height", "left", "right"):
        if key in section:
            kwargs[key] = float(section[key])
    if "values" in section:
        kwargs["values"] = np.asarray(section["values"], dtype=float)
    if "times" in section:
        kwargs["times"] = np.asarray(section["times"], dtype=float)
    return PotentialSpec(form=form, **kwargs)


def _parse_functional(section) -> FunctionalSection:
    _require_keys(section, "functional", ["half_width", "points"],
                  ["sites", "spacing", "boundary", "center", "width", "coupling",
                   "qbar_mode", "convention", "frozen", "dt"])
    f = FunctionalSection(
        sites=section.get("sites", 1),
        spacing=_positive(section.get("spacing", 1.0), "functional.spacing"),
        boundary=section.get("boundary", "periodic"),
        half_width=_positive(section["half_width"], "functional.half_width"),
        points=section["points"],
        width=_positive(section.get("width", 1.0), "functional.width"),
        coupling=section.get("coupling", MODE_INTEGRAL),
        qbar_mode=section.get("qbar_mode", QBAR_ANTICOMMUTATOR),
        convention=str(section.get("convention", CONVENTION_EXACT)).replace("-", "_"),
        frozen=bool(section.get("frozen", False)),
        dt=None if section.get("dt") is None else _positive(section["dt"], "functional.dt"),
    )
    center = section.get("center", [[0.0, 0.0]] * f.sites)
    arr = np.zeros(f.sites, dtype=complex)
    if not isinstance(center, list) or len(center) != f.sites:
        raise ConfigurationError(
            f"functional.center must be a list of {f.sites} [re, im] pairs or numbers")
    for j, entry in enumerate(center):
        if isinstance(entry, (int, float)):
            arr[j] = float(entry)
        elif isinstance(entry, list) and len(entry) == 2:
            arr[j] = float(entry[0]) + 1j * float(entry[1])
        else:
            raise ConfigurationError(
                f"functional.center[{j}] must be a number or [re, im] pair")
    f.center = arr
    if f.coupling not in (MODE_INTEGRAL, MODE_LOCAL):
        raise ConfigurationError(f"functional.coupling must be integral or local")
    if f.qbar_mode not in (QBAR_ANTICOMMUTATOR, QBAR_DIRECT):
        raise ConfigurationError("functional.qbar_mode must be anticommutator or direct")
    if f.convention not in (CONVENTION_EXACT, CONVENTION_AS_PRINTED):
        raise ConfigurationError("functional.convention must be exact or as-printed")
    return f


def parse_scenario(doc: dict, raw_text: str = "", out_override: str = None,
                   seed_override: int = None) -> ScenarioConfig:
    """Validate a scenario document completely before any compute starts."""
    if not isinstance(doc, dict):
        raise ConfigurationError("scenario must be a JSON object")
    _require_keys(doc, "scenario", ["grid", "initial", "stepping"],
                  ["potential", "functional", "trajectories", "output"])

    gsec = doc["grid"]
    _require_keys(gsec, "grid", ["sites", "spacing"], ["origin", "boundary"])
    grid = build_spatial_grid(gsec["sites"], _positive(gsec["spacing"], "grid.spacing"),
                              float(gsec.get("origin", 0.0)),
                              gsec.get("boundary", "periodic"))

    potential = _parse_potential(doc.get("potential", {"form": "free"}))
    potential.on_grid(grid, 0.0)  # force early shape/validity check

    isec = doc["initial"]
    _require_keys(isec, "initial", ["kind"],
                  ["center", "width", "momentum", "mode_index"])
    kind = isec["kind"]
    if kind not in ("gaussian", "plane_wave"):
        raise ConfigurationError(f"initial.kind must be gaussian or plane_wave, got {kind!r}")
    width = _positive(isec.get("width", 1.0), "initial.width") if kind == "gaussian" else 1.0

    ssec = doc["stepping"]
    _require_keys(ssec, "stepping", ["dt", "t_end"],
                  ["mode", "output_stride", "functional_scheme", "allow_loose_dt"])
    mode = ssec.get("mode", MODE_STANDARD)
    if mode not in MODES:
        raise ConfigurationError(f"stepping.mode must be one of {MODES}, got {mode!r}")
    dt = _positive(ssec["dt"], "stepping.dt")
    t_end = _positive(ssec["t_end"], "stepping.t_end")
    stride = ssec.get("output_stride", 1)
    if not isinstance(stride, int) or stride < 1:
        raise ConfigurationError("stepping.output_stride must be a positive integer")
    scheme = ssec.get("functional_scheme", "strang_spectral")
    if scheme not in ("strang_spectral", "crank_nicolson"):
        raise ConfigurationError(
            "stepping.functional_scheme must be strang_spectral or crank_nicolson")

    functional = None
    if "functional" in doc:
        functional = _parse_functional(doc["functional"])
    if mode != MODE_STANDARD and functional is None:
        raise ConfigurationError(
            f"stepping.mode={mode!r} requires a 'functional' section")

    tsec = doc.get("trajectories", {})
    _require_keys(tsec, "trajectories", [], ["count", "seed", "interpolation", "substeps"])
    count = _nonneg_int(tsec.get("count", 0), "trajectories.count")
    seed = tsec.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigurationError("trajectories.seed must be a non-negative integer")
    interp = tsec.get("interpolation", "linear")
    if interp not in ("linear", "cubic"):
        raise ConfigurationError("trajectories.interpolation must be linear or cubic")
    substeps = tsec.get("substeps", 1)
    if not isinstance(substeps, int) or substeps < 1:
        raise ConfigurationError("trajectories.substeps must be a positive integer")
    if seed_override is not None:
        seed = seed_override

    osec = doc.get("output", {})
    _require_keys(osec, "output", [], ["directory", "formats"])
    out_dir = out_override or osec.get("directory")
    formats = tuple(osec.get("formats", ["csv"]))
    for fmt in formats:
        if fmt != "csv":
            raise ConfigurationError(f"unsupported output format {fmt!r}")

    cfg = ScenarioConfig(
        grid=grid, potential=potential, initial_kind=kind,
        initial_center=float(isec.get("center", 0.0)), initial_width=width,
        initial_momentum=float(isec.get("momentum", 0.0)),
        initial_mode_index=int(isec.get("mode_index", 1)),
        mode=mode, dt=dt, t_end=t_end, output_stride=stride,
        functional_scheme=scheme,
        allow_loose_dt=bool(ssec.get("allow_loose_dt", False)),
        functional=functional, traj_count=count, traj_seed=seed,
        traj_interpolation=interp, traj_substeps=substeps,
        out_dir=out_dir, formats=formats, raw_text=raw_text)
    _cross_validate(cfg)
    return cfg


def _cross_validate(cfg: ScenarioConfig):
    if cfg.n_steps < 1:
        raise ConfigurationError("stepping.t_end must cover at least one dt step")
    if cfg.mode == MODE_STANDARD or cfg.functional is None:
        return
    f = cfg.functional
    dom = cfg.config_grid()  # enforces the point cap and evenness

    if f.sites != 1 and f.sites != cfg.grid.sites:
        raise ConfigurationError(
            "functional.sites must be 1 (site-wise broadcast coupling) or equal "
            f"to grid.sites; got {f.sites} vs {cfg.grid.sites}")

    # the initial field, plus one interpolation cell and the perturbation step,
    # must fit inside the configuration box
    psi0 = cfg.initial_field().values
    reach = float(np.max(np.abs(np.concatenate([psi0.real, psi0.imag]))))
    margin = dom.spacing * 1.25
    if reach + margin >= f.half_width:
        raise ConfigurationError(
            f"functional.half_width={f.half_width} leaves no interpolation margin "
            f"for the initial field (site values reach {reach:.3g}); increase it")
    for j, c in enumerate(f.center):
        if max(abs(c.real), abs(c.imag)) + 4.0 * f.width >= f.half_width:
            warnings.warn(
                f"functional.center[{j}] + 4*width exceeds the box half-width; "
                "the initial functional will be truncated", stacklevel=2)

    if not f.frozen:
        H = build_functional_hamiltonian(cfg.potential, cfg.functional_lattice(), dom)
        guide = suggested_dt_max(H)
        if cfg.functional_dt > guide and not cfg.allow_loose_dt:
            raise ConfigurationError(
                f"functional time step {cfg.functional_dt} exceeds the accuracy "
                f"guidance {guide:.3g} (0.1/max(|c_j| k_max^2, max V)); reduce "
                "functional.dt or set stepping.allow_loose_dt")


def load_scenario(path, out_override=None, seed_override=None) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.read()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as err:
        raise ConfigurationError(f"config is not valid JSON: {err}") from err
    return parse_scenario(doc, raw_text=raw, out_override=out_override,
                          seed_override=seed_override)
