"""Scenario files.

A scenario is a YAML mapping.  Every block is optional and falls back to the
defaults below; unknown keys anywhere are rejected so typos fail loudly.
Relative paths are resolved against the scenario file's directory.

.. code-block:: yaml

    seed: 7
    pattern: patterns/circle50.csv
    cloth: {rows: 25, cols: 25, pins: corners, gravity: [0, 0, -0.01]}
    planner: {theta_max: 60, step_length: 2.0, ordering: greedy}
    cutting: {settle_steps: 20, resolution: 200}
    tension: {iterations: 10, population: 32, elite_fraction: 0.125}
    grasp: {k: 20, margin: 5.0}
    platform: {dims: {L1: 2.0}, motion: {axis: z, mode: sinusoid, A: 1.0, omega: 0.2}}
    sync: {axes: {x: {A: 25, omega: 0.2, phi: 0}}, controller: full_sync}
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml


class ConfigError(ValueError):
    pass


@dataclass
class ClothBlock:
    rows: int = 25
    cols: int = 25
    width_mm: float = 101.6
    pins: Any = "corners"
    alpha: float = 0.99
    delta: float = 0.008
    tau: float = 1.0
    gravity: list = field(default_factory=lambda: [0.0, 0.0, -0.01])
    constraint_iterations: int = 3
    diagonals: bool = False
    presettle_steps: int = 30000


@dataclass
class PlannerBlock:
    theta_max: float = 60.0
    step_length: float = 2.0
    ordering: str = "greedy"


@dataclass
class CuttingBlock:
    settle_steps: int = 20
    radius: float | None = None
    resolution: int = 200
    reward_tol: float = 1.0


@dataclass
class TensionBlock:
    iterations: int = 10
    population: int = 32
    elite_fraction: float = 0.125
    smoothing: float = 0.05
    lam: float | None = None
    d_max: float = 15.0
    grasp: int | None = None
    orthogonal_mm: float = 5.0


@dataclass
class GraspBlock:
    k: int = 20
    margin: float = 5.0
    candidates: list | None = None


@dataclass
class MotionBlock:
    axis: str = "z"
    mode: str = "sinusoid"
    A: float = 1.0
    omega: float = 0.2
    duration: float = 10.0
    rate: float = 100.0


@dataclass
class PlatformBlock:
    dims: dict = field(default_factory=dict)
    motion: MotionBlock = field(default_factory=MotionBlock)


@dataclass
class SyncBlock:
    axes: dict = field(default_factory=lambda: {"x": {"A": 25.0, "omega": 0.2, "phi": 0.0}})
    sigma_omega_rel: float = 0.03
    sigma_phi: float = 0.22
    latency_mean: float = 0.0
    latency_jitter: float = 0.576
    controller: str = "full_sync"
    window_s: float = 0.25
    trials: int = 1000
    horizon_s: float | None = None
    dt: float = 0.01
    path_s: float = 10.0


@dataclass
class Scenario:
    seed: int = 0
    pattern: str | None = None
    output: str | None = None
    cloth: ClothBlock = field(default_factory=ClothBlock)
    planner: PlannerBlock = field(default_factory=PlannerBlock)
    cutting: CuttingBlock = field(default_factory=CuttingBlock)
    tension: TensionBlock = field(default_factory=TensionBlock)
    grasp: GraspBlock = field(default_factory=GraspBlock)
    platform: PlatformBlock = field(default_factory=PlatformBlock)
    sync: SyncBlock = field(default_factory=SyncBlock)
    base_dir: str = field(default=".", repr=False)

    def resolve(self, rel: str | None) -> Path | None:
        if rel is None:
            return None
        p = Path(rel)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        return d

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form (paths as written)."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_DIMS_KEYS = {"L1", "L2", "Z_home", "L_OB", "L_OP", "theta_b", "theta_p", "servo_limit"}


def _build(cls, data, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields) - {"base_dir"})
    if unknown or "base_dir" in data:
        raise ConfigError(f"{where}: unknown key(s) {unknown or ['base_dir']}")
    kwargs = {}
    for name, value in data.items():
        sub = fields[name].default_factory if fields[name].default_factory is not dataclasses.MISSING else None
        if sub is not None and dataclasses.is_dataclass(sub):
            kwargs[name] = _build(sub, value, f"{where}.{name}")
        else:
            kwargs[name] = value
    return cls(**kwargs)


def _check(sc: Scenario):
    if not isinstance(sc.seed, int) or sc.seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    bad = set(sc.platform.dims) - _DIMS_KEYS
    if bad:
        raise ConfigError(f"platform.dims: unknown key(s) {sorted(bad)}")
    for name, ax in sc.sync.axes.items():
        if not isinstance(ax, dict) or set(ax) - {"A", "omega", "phi"}:
            raise ConfigError(f"sync.axes.{name}: expected keys A, omega, phi")
    if sc.planner.ordering not in ("greedy", "exhaustive"):
        raise ConfigError("planner.ordering must be greedy or exhaustive")
    if len(sc.cloth.gravity) != 3:
        raise ConfigError("cloth.gravity must have 3 components")
    if sc.pattern is not None and not sc.resolve(sc.pattern).exists():
        raise ConfigError(f"pattern file not found: {sc.resolve(sc.pattern)}")


def from_dict(data: dict | None, base_dir=".") -> Scenario:
    data = dict(data or {})
    sc = _build(Scenario, data, "scenario")
    sc.base_dir = str(base_dir)
    _check(sc)
    return sc


def load(path) -> Scenario:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return from_dict(data, path.parent)
