"""Scenario configuration: parsing, validation, overrides and initial data."""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .charge import ChargeProfile
from .coupling import GridModel
from .dynamics import SCHEMES, IntegratorConfig
from .grid import FieldState, SpectralGrid, SystemState, positions, project_transverse, random_transverse, to_spectral
from .kirchhoff import InitialFieldSpec
from .soliton import _grid_soliton

INITIAL_TYPES = ("soliton", "perturbed-soliton", "kick", "far-field", "custom")


class ConfigError(ValueError):
    """Malformed or inconsistent scenario configuration."""


def _vec3(v, name) -> np.ndarray:
    try:
        a = np.asarray(v, dtype=float).reshape(3)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a 3-vector, got {v!r}") from exc
    if not np.all(np.isfinite(a)):
        raise ConfigError(f"{name} must be finite")
    return a


def _require(d: dict, key: str, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"section {where!r} must be an object")
    if key not in d:
        raise ConfigError(f"missing key {where}.{key}")
    return d[key]


@dataclass
class Scenario:
    profile: ChargeProfile
    grid: SpectralGrid
    integrator: IntegratorConfig
    initial: dict
    R_list: list
    samples: int
    osc_T: list
    allow_wrap: bool = False
    tolerances: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)
    base_dir: Path | None = None

    @property
    def seed(self):
        return self.initial.get("seed")

    def sample_times(self) -> np.ndarray:
        return np.linspace(0.0, self.integrator.t_max, self.samples)


DEFAULT_TOLERANCES = {"H": 1e-6, "pi_norm": 1e-8, "omega_tilde_norm": 1e-8}


def parse_config(cfg: dict, allow_wrap: bool = False, base_dir: Path | None = None) -> Scenario:
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(cfg) - {"profile", "grid", "integrator", "initial", "diagnostics", "name", "allow_wrap"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    try:
        prof = _require(cfg, "profile", "")
        profile = ChargeProfile.from_dict(prof)
        g = _require(cfg, "grid", "")
        grid = SpectralGrid(int(_require(g, "N", "grid")), float(_require(g, "L", "grid")))
        it = _require(cfg, "integrator", "")
        integ = IntegratorConfig(float(_require(it, "dt", "integrator")), float(_require(it, "t_max", "integrator")),
                                 str(it.get("scheme", "strang")))
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc

    if grid.L <= 4 * profile.R_rho:
        raise ConfigError(f"box L={grid.L:g} must exceed 4 R_rho={4 * profile.R_rho:g}")
    if integ.scheme == "rk4-monolithic" and integ.dt * math.sqrt(3) * grid.k_max >= 2:
        raise ConfigError("rk4-monolithic needs dt·k_max < 2")

    init = dict(_require(cfg, "initial", ""))
    kind = _require(init, "type", "initial")
    if kind not in INITIAL_TYPES:
        raise ConfigError(f"initial.type must be one of {INITIAL_TYPES}, got {kind!r}")
    init["omega0"] = _vec3(init.get("omega0", [0.0, 0.0, 1.0]), "initial.omega0").tolist()
    if "omega1" in init:
        init["omega1"] = _vec3(init["omega1"], "initial.omega1").tolist()
    if kind == "kick" and "omega1" not in init:
        raise ConfigError("kick needs initial.omega1")
    if kind == "far-field":
        sigma = float(init.get("sigma", 0.75))
        if not sigma > 0.5:
            raise ConfigError("initial.sigma must exceed 1/2")
    if kind == "custom" and "path" not in init:
        raise ConfigError("custom initial data needs initial.path (an .npz file)")
    if "seed" in init and init["seed"] is not None and not isinstance(init["seed"], int):
        raise ConfigError("initial.seed must be an integer")

    diag = cfg.get("diagnostics", {})
    if not isinstance(diag, dict):
        raise ConfigError("diagnostics must be an object")
    R_list = [float(R) for R in diag.get("R", [])]
    for R in R_list:
        if not 0 < R < grid.L / 2:
            raise ConfigError(f"diagnostics.R value {R:g} must lie in (0, L/2)")
    samples = int(diag.get("samples", 101))
    if samples < 2:
        raise ConfigError("diagnostics.samples must be at least 2")
    osc_T = [float(T) for T in diag.get("osc_T", [])]
    for T in osc_T:
        if not 0 <= T < integ.t_max:
            raise ConfigError(f"osc_T value {T:g} outside [0, t_max)")
    tol = dict(DEFAULT_TOLERANCES)
    tol.update({k: float(v) for k, v in diag.get("tolerances", {}).items()})

    allow = bool(allow_wrap or cfg.get("allow_wrap", False))
    wrap = grid.wrap_time(profile.R_rho)
    if integ.t_max > wrap and not allow:
        raise ConfigError(f"t_max={integ.t_max:g} exceeds the wrap time {wrap:g}; pass --allow-wrap to override")
    return Scenario(profile, grid, integ, init, R_list, samples, osc_T, allow, tol, copy.deepcopy(cfg), base_dir)


def load_config(path, overrides=(), allow_wrap: bool = False) -> Scenario:
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    cfg = apply_overrides(cfg, overrides)
    return parse_config(cfg, allow_wrap=allow_wrap, base_dir=path.parent)


def bundled_config(name: str) -> Path:
    """Path of a scenario shipped with the package (e.g. 'soliton.json')."""
    ref = resources.files("rotorfield") / "scenarios" / name
    if not ref.is_file():
        raise ConfigError(f"no bundled scenario {name!r}")
    return Path(str(ref))


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply ``section.key=value`` overrides; values are parsed as JSON when possible."""
    cfg = copy.deepcopy(cfg)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        if not all(parts):
            raise ConfigError(f"bad override key {key!r}")
        try:
            val = json.loads(value)
        except json.JSONDecodeError:
            val = value
        node = cfg
        for p in parts[:-1]:
            nxt = node.setdefault(p, {})
            if not isinstance(nxt, dict):
                raise ConfigError(f"override {key!r} descends into a non-object")
            node = nxt
        node[parts[-1]] = val
    return cfg


# -- initial data ---------------------------------------------------------------------

def _window(grid: SpectralGrid, r: np.ndarray, frac: float = 0.45) -> np.ndarray:
    """Smooth radial cutoff: 1 inside 0.6 r_c, 0 beyond r_c = frac L."""
    rc = frac * grid.L
    r0 = 0.6 * rc
    s = np.clip((r - r0) / (rc - r0), 0.0, 1.0)
    return np.where(s <= 0, 1.0, np.where(s >= 1, 0.0, 0.5 * (1 + np.cos(np.pi * s))))


def far_field_data(grid: SpectralGrid, sigma: float, amplitude: float = 1.0):
    """Windowed algebraic initial fields on the grid and their mesh-free spec."""
    spec = InitialFieldSpec("algebraic", sigma, amp_A=amplitude, amp_Pi=amplitude)
    x = np.moveaxis(positions(grid), 0, -1)
    r = np.linalg.norm(x, axis=-1)
    win = _window(grid, r)[None]
    A = np.moveaxis(spec.A(x), -1, 0) * win
    Pi = np.moveaxis(spec.Pi(x), -1, 0) * win
    F = FieldState(project_transverse(grid, to_spectral(grid, A)), project_transverse(grid, to_spectral(grid, Pi)))
    return F, spec


@dataclass
class InitialData:
    state: SystemState
    free_field: FieldState | None = None
    spec: InitialFieldSpec | None = None


def build_initial(sc: Scenario) -> InitialData:
    model = GridModel.get(sc.grid, sc.profile)
    init = sc.initial
    kind = init["type"]
    w0 = np.asarray(init["omega0"], float)
    S = _grid_soliton(w0, model).state()
    if kind == "soliton":
        return InitialData(S)
    if kind == "kick":
        return InitialData(SystemState(S.field, init["omega1"]))
    if kind == "perturbed-soliton":
        rng = np.random.default_rng(init.get("seed", 0))
        amp = float(init.get("amplitude", 1e-2))
        k0 = float(init.get("k0", 2.0))
        dF = FieldState(random_transverse(sc.grid, rng, k0), random_transverse(sc.grid, rng, k0))
        scale = amp / max(math.sqrt(sum(float(np.sum(np.abs(X) ** 2)) for X in (dF.A_hat, dF.Pi_hat)) / sc.grid.volume), 1e-300)
        w = np.asarray(init.get("omega1", w0), float)
        return InitialData(SystemState(S.field + dF.scaled(scale), w))
    if kind == "far-field":
        F, spec = far_field_data(sc.grid, float(init.get("sigma", 0.75)), float(init.get("amplitude", 0.05)))
        w = np.asarray(init.get("omega1", w0), float)
        return InitialData(SystemState(S.field + F, w), free_field=F, spec=spec)
    # custom
    p = Path(init["path"])
    if not p.is_absolute() and sc.base_dir is not None:
        p = sc.base_dir / p
    try:
        data = np.load(p)
        A, Pi = data["A_hat"], data["Pi_hat"]
        w = data["omega"] if "omega" in data else w0
    except (OSError, KeyError) as exc:
        raise ConfigError(f"cannot read custom initial data {p}: {exc}") from exc
    shape = (3, sc.grid.N, sc.grid.N, sc.grid.N)
    if A.shape != shape or Pi.shape != shape:
        raise ConfigError(f"custom fields must have shape {shape}")
    F = FieldState(project_transverse(sc.grid, A), project_transverse(sc.grid, Pi))
    return InitialData(SystemState(F, w))
