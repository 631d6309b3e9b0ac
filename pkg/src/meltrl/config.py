"""Structured key-value run configuration with sectioned text files.

The format is deliberately small: ``[section]`` headers, ``key = value``
lines, ``#`` comments.  Unknown sections or keys are hard errors with the
offending line number; ``parse(emit(cfg))`` round-trips exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .env import ObservationSpec, RewardConfig, VelocityBounds
from .params import (
    ADIABATIC,
    FIXED,
    BoundaryCondition,
    FaceRule,
    GridSpec,
    LaserParams,
    MaterialParams,
)
from .ppo import PPOConfig

__all__ = ["ConfigError", "RunConfig", "parse_config", "emit_config", "load_config"]


class ConfigError(Exception):
    pass


@dataclass
class PathConfig:
    kind: str = "cross_hatch"  # or "concentric_triangles"
    length_um: float = 1250.0
    hatch_um: float = 125.0
    rows: int = 10
    first_fraction: float = 0.75
    shrink: float = 0.75
    interior_deg: float = 60.0
    min_len_um: float = 50.0
    interval_um: float = 50.0

    def __post_init__(self):
        if self.kind not in ("cross_hatch", "concentric_triangles"):
            raise ConfigError(f"unknown path kind {self.kind!r}")


@dataclass
class RunConfig:
    """Everything one command needs: physics, path, env and trainer settings."""

    material: MaterialParams = field(default_factory=MaterialParams)
    laser: LaserParams = field(default_factory=LaserParams)
    grid: GridSpec = field(default_factory=GridSpec)
    boundary: BoundaryCondition = field(
        default_factory=lambda: BoundaryCondition(bottom=FaceRule(FIXED, 300.0))
    )
    path: PathConfig = field(default_factory=PathConfig)
    velocity: VelocityBounds = field(default_factory=lambda: VelocityBounds(0.1, 0.5))
    reward: RewardConfig = field(default_factory=RewardConfig)
    observation: ObservationSpec = field(default_factory=ObservationSpec)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    seed: int = 0
    out_dir: str = "runs"

    def build_path(self):
        from .scanpath import concentric_triangles, cross_hatch

        ext = self.grid.extent_um
        p = self.path
        if p.kind == "cross_hatch":
            span_y = (p.rows - 1) * p.hatch_um
            start = (0.5 * (ext[0] - p.length_um), 0.5 * (ext[1] - span_y))
            return cross_hatch(
                p.length_um,
                p.hatch_um,
                p.rows,
                start_um=start,
                interval_um=p.interval_um,
                domain_um=ext[:2],
            )
        path = concentric_triangles(
            p.length_um,
            first_fraction=p.first_fraction,
            shrink=p.shrink,
            interior_deg=p.interior_deg,
            min_len_um=p.min_len_um,
            interval_um=p.interval_um,
        )
        x0, y0, x1, y1 = path.bbox()
        shift = (0.5 * (ext[0] - (x1 - x0)) - x0, 0.5 * (ext[1] - (y1 - y0)) - y0)
        from .scanpath import ScanPath, Segment

        moved = [
            Segment(
                (s.start[0] + shift[0], s.start[1] + shift[1]),
                (s.end[0] + shift[0], s.end[1] + shift[1]),
            )
            for s in path.segments
        ]
        out = ScanPath(moved, p.interval_um)
        out.check_domain(ext[:2])
        return out


def _face_str(r: FaceRule) -> str:
    return "adiabatic" if r.kind == ADIABATIC else f"fixed:{r.temp:.10g}"


def _parse_face(v: str, line: int) -> FaceRule:
    if v == "adiabatic":
        return FaceRule(ADIABATIC)
    if v.startswith("fixed:"):
        try:
            return FaceRule(FIXED, float(v.split(":", 1)[1]))
        except ValueError:
            pass
    raise ConfigError(f"line {line}: bad face rule {v!r} (adiabatic | fixed:<K>)")


# section -> key -> (getter from RunConfig, setter into builder dict, formatter)
_SCHEMA = {
    "run": {
        "seed": ("seed", int),
        "out_dir": ("out_dir", str),
    },
    "material": {
        "absorptivity": ("absorptivity", float),
        "conductivity": ("conductivity", float),
        "heat_capacity": ("heat_capacity", float),
        "density": ("density", float),
        "melt_temp": ("melt_temp", float),
        "ambient_temp": ("ambient_temp", float),
    },
    "laser": {
        "power": ("power", float),
        "beam_sigma_um": ("beam_sigma_um", float),
    },
    "grid": {
        "dx_um": ("dx_um", float),
        "nx": ("nx", int),
        "ny": ("ny", int),
        "nz": ("nz", int),
    },
    "boundary": {
        "x_lo": ("x_lo", "face"),
        "x_hi": ("x_hi", "face"),
        "y_lo": ("y_lo", "face"),
        "y_hi": ("y_hi", "face"),
        "bottom": ("bottom", "face"),
    },
    "path": {
        "kind": ("kind", str),
        "length_um": ("length_um", float),
        "hatch_um": ("hatch_um", float),
        "rows": ("rows", int),
        "first_fraction": ("first_fraction", float),
        "shrink": ("shrink", float),
        "interior_deg": ("interior_deg", float),
        "min_len_um": ("min_len_um", float),
        "interval_um": ("interval_um", float),
    },
    "velocity": {
        "v_min": ("v_min", float),
        "v_max": ("v_max", float),
        "resolution": ("resolution", float),
    },
    "reward": {
        "target_depth_um": ("target_depth_um", float),
        "range_weight": ("range_weight", float),
        "range_normalizer_um": ("range_normalizer_um", float),
    },
    "observation": {
        "window_um": ("window_um", float),
        "history": ("history", int),
    },
    "ppo": {
        "clip_eps": ("clip_eps", float),
        "gamma": ("gamma", float),
        "lam": ("lam", float),
        "epochs": ("epochs", int),
        "minibatch": ("minibatch", int),
        "lr": ("lr", float),
        "n_envs": ("n_envs", int),
        "n_updates": ("n_updates", int),
        "seed": ("seed", int),
        "value_coef": ("value_coef", float),
        "entropy_coef": ("entropy_coef", float),
        "log_std_init": ("log_std_init", float),
        "optimizer": ("optimizer", str),
        "hidden": ("hidden", int),
        "checkpoint_every": ("checkpoint_every", int),
    },
}

_SECTION_FACTORY = {
    "material": MaterialParams,
    "laser": LaserParams,
    "grid": GridSpec,
    "path": PathConfig,
    "velocity": VelocityBounds,
    "reward": RewardConfig,
    "observation": ObservationSpec,
    "ppo": PPOConfig,
    "boundary": BoundaryCondition,
}


def parse_config(text: str) -> RunConfig:
    """Parse sectioned key-value text; unknown keys fail with line numbers."""
    sections: dict[str, dict] = {}
    current_name = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current_name = line[1:-1].strip()
            if current_name not in _SCHEMA:
                raise ConfigError(f"line {lineno}: unknown section [{current_name}]")
            sections.setdefault(current_name, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        if current_name is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, val = (part.strip() for part in line.split("=", 1))
        schema = _SCHEMA[current_name]
        store = sections[current_name]
        if key not in schema:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{current_name}]")
        fieldname, conv = schema[key]
        if fieldname in store:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            if conv == "face":
                store[fieldname] = _parse_face(val, lineno)
            else:
                store[fieldname] = conv(val)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None

    kwargs = {}
    for sec, factory in _SECTION_FACTORY.items():
        vals = sections.get(sec, {})
        try:
            kwargs[sec] = factory(**vals)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"in section [{sec}]: {exc}") from None
    run_vals = sections.get("run", {})
    kwargs["seed"] = run_vals.get("seed", 0)
    kwargs["out_dir"] = run_vals.get("out_dir", "runs")
    return RunConfig(**kwargs)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def emit_config(cfg: RunConfig) -> str:
    """Render a RunConfig back to text; parse(emit(cfg)) == cfg."""
    out = []
    out.append("[run]")
    out.append(f"seed = {cfg.seed}")
    out.append(f"out_dir = {cfg.out_dir}")
    for sec in ("material", "laser", "grid", "path", "velocity", "reward", "observation", "ppo"):
        obj = getattr(cfg, sec)
        out.append("")
        out.append(f"[{sec}]")
        for key, (fieldname, conv) in _SCHEMA[sec].items():
            val = getattr(obj, fieldname)
            if val is None:
                continue
            out.append(f"{key} = {_fmt(val)}")
    out.append("")
    out.append("[boundary]")
    for key in ("x_lo", "x_hi", "y_lo", "y_hi", "bottom"):
        out.append(f"{key} = {_face_str(getattr(cfg.boundary, key))}")
    out.append("")
    return "\n".join(out)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())
