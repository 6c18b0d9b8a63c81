"""JSON run configuration: schema, dotted overrides and model builders.

Schema (every block optional, defaults shown by :func:`default_config`)::

    {
      "scenario": null | {"name": "static_uniaxial", "params": {...}},
      "grid":     {"x_left": 0.0, "x_right": 1.0, "n_nodes": 101},
      "material": {"lam": 0.0, "mu": 1.0, "rho": 1.0},
      "bc":       {"left": "clamped", "right": "clamped"},
      "alpha":    {"kind": "crossed_grid", "profile": "linear", "slope": 1.0,
                   "amplitude": 1.0, "wavenumber": 1.0}
                | {"kind": "uniform", "tensor": [[...], [...], [...]]},
      "initial":  {"eps": [6 packed values], "v": [3 values]},
      "time":     {"dt": null, "t_end": 1.0, "integrator": "rk4",
                   "cfl_safety": 0.5, "record_every": 1, "snapshot_every": 0},
      "eigen":    {"tol": 1e-8}
    }

When ``scenario`` is set the grid, material, boundary, alpha and initial
blocks come from the named preset; ``time`` entries that are given
explicitly still override the preset.
"""
from __future__ import annotations

import copy
import json
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .dynamics import Integrator, SimConfig
from .fields import BC, BoundaryCondition, FieldState, Grid1D, PsiField, alpha_from_psi, uniform_alpha
from .scenarios import BUILDERS, build
from .tensors import Material


class ConfigFileError(ValueError):
    """Raised for unreadable or schema-violating configuration."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ScenarioBlock(_Strict):
    name: str
    params: dict = Field(default_factory=dict)

    @field_validator("name")
    @classmethod
    def _known(cls, v):
        if v not in BUILDERS:
            raise ValueError(f"unknown scenario {v!r}; choose from {sorted(BUILDERS)}")
        return v


class GridBlock(_Strict):
    x_left: float = 0.0
    x_right: float = 1.0
    n_nodes: int = Field(101, ge=3)


class MaterialBlock(_Strict):
    lam: float = 0.0
    mu: float = Field(1.0, gt=0)
    rho: float = Field(1.0, gt=0)


class BCBlock(_Strict):
    left: BC = BC.CLAMPED
    right: BC = BC.CLAMPED


class CrossedGridAlpha(_Strict):
    kind: Literal["crossed_grid"] = "crossed_grid"
    profile: Literal["linear", "constant", "sine"] = "linear"
    slope: float = 1.0
    amplitude: float = 1.0
    wavenumber: float = 1.0


class UniformAlpha(_Strict):
    kind: Literal["uniform"]
    tensor: list[list[float]]

    @field_validator("tensor")
    @classmethod
    def _shape(cls, v):
        if len(v) != 3 or any(len(r) != 3 for r in v):
            raise ValueError("tensor must be 3x3")
        return v


class InitialBlock(_Strict):
    eps: list[float] = Field(default_factory=lambda: [0.0] * 6, min_length=6, max_length=6)
    v: list[float] = Field(default_factory=lambda: [0.0] * 3, min_length=3, max_length=3)


class TimeBlock(_Strict):
    dt: Optional[float] = Field(None, gt=0)
    t_end: Optional[float] = Field(None, gt=0)
    integrator: Optional[Integrator] = None
    cfl_safety: float = Field(0.5, gt=0)
    record_every: int = Field(1, ge=1)
    snapshot_every: int = Field(0, ge=0)


class EigenBlock(_Strict):
    tol: float = Field(1e-8, gt=0)


class RunConfig(_Strict):
    scenario: Optional[ScenarioBlock] = None
    grid: GridBlock = Field(default_factory=GridBlock)
    material: MaterialBlock = Field(default_factory=MaterialBlock)
    bc: BCBlock = Field(default_factory=BCBlock)
    alpha: Union[CrossedGridAlpha, UniformAlpha] = Field(default_factory=CrossedGridAlpha, discriminator="kind")
    initial: InitialBlock = Field(default_factory=InitialBlock)
    time: TimeBlock = Field(default_factory=TimeBlock)
    eigen: EigenBlock = Field(default_factory=EigenBlock)


def default_config():
    return RunConfig().model_dump(mode="json")


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw, overrides):
    """Apply ``key.sub=value`` strings to a nested dict; values are parsed as JSON when possible."""
    out = copy.deepcopy(raw)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigFileError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        if not all(parts):
            raise ConfigFileError(f"override {item!r} has an empty key segment")
        node = out
        for p in parts[:-1]:
            nxt = node.get(p)
            if nxt is None:
                nxt = node[p] = {}
            if not isinstance(nxt, dict):
                raise ConfigFileError(f"override {item!r}: {p!r} is not a block")
            node = nxt
        node[parts[-1]] = _parse_value(value)
    return out


def _format_errors(err):
    lines = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{path}: {e['msg']}")
    return "; ".join(lines)


def load_config(path=None, overrides=()):
    """Read, override and validate; returns ``(RunConfig, effective dict)``."""
    raw = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigFileError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigFileError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigFileError("config root must be a JSON object")
    raw = apply_overrides(raw, overrides)
    try:
        cfg = RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigFileError(_format_errors(exc)) from exc
    return cfg, cfg.model_dump(mode="json")


def build_grid(cfg):
    return Grid1D(cfg.grid.x_left, cfg.grid.x_right, cfg.grid.n_nodes)


def build_material(cfg):
    m = cfg.material
    return Material.isotropic(m.lam, m.mu, m.rho)


def build_alpha(cfg, grid):
    a = cfg.alpha
    if a.kind == "uniform":
        return uniform_alpha(grid, np.array(a.tensor))
    return alpha_from_psi(grid, PsiField(a.profile, a.slope, a.amplitude, a.wavenumber))


def build_problem(cfg):
    """``(grid, material, bc, alpha)`` from a scenario preset or the explicit blocks."""
    if cfg.scenario is not None:
        sc = build(cfg.scenario.name, **cfg.scenario.params)
        c = sc.config
        return c.grid, c.material, c.bc, c.initial_state.alpha
    grid = build_grid(cfg)
    return grid, build_material(cfg), BoundaryCondition(cfg.bc.left, cfg.bc.right), build_alpha(cfg, grid)


def build_sim_config(cfg):
    """A :class:`SimConfig` from a validated :class:`RunConfig`."""
    t = cfg.time
    if cfg.scenario is not None:
        params = dict(cfg.scenario.params)
        if t.integrator is not None:
            params.setdefault("integrator", t.integrator.value)
        if t.dt is not None:
            params.setdefault("dt", t.dt)
        base = build(cfg.scenario.name, **params).config
        return SimConfig(base.grid, base.material, base.bc, base.initial_state,
                         dt=base.dt, t_end=t.t_end if t.t_end is not None else base.t_end,
                         integrator=base.integrator, record_every=t.record_every,
                         snapshot_every=t.snapshot_every, cfl_safety=max(base.cfl_safety, t.cfl_safety),
                         alpha_source=base.alpha_source)
    grid, material, bc, alpha = build_problem(cfg)
    n = grid.n_nodes
    eps = np.tile(np.asarray(cfg.initial.eps, dtype=float), (n, 1))
    v = np.tile(np.asarray(cfg.initial.v, dtype=float), (n, 1))
    state = FieldState(eps, v, np.zeros((n, 3, 3)), alpha)
    dt = t.dt if t.dt is not None else t.cfl_safety * grid.h / material.max_wave_speed()
    return SimConfig(grid, material, bc, state, dt=dt, t_end=t.t_end if t.t_end is not None else 1.0,
                     integrator=t.integrator or Integrator.RK4, record_every=t.record_every,
                     snapshot_every=t.snapshot_every, cfl_safety=t.cfl_safety)
