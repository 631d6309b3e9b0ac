"""Episodic control environment around the thermal simulator.

One episode is one full pass of the laser over a scan path; one step is one
50 um control interval at the commanded velocity.  Observations are nine
whitened 8x8 heat-map crops (surface, along-track depth and cross-track
depth sections, for the current and two previous steps); the reward tracks
melt-depth error against the target with an episode-level spread penalty.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .meltpool import MeltDepthTrace, sample_depth
from .params import ADIABATIC, BoundaryCondition, GridSpec, LaserParams, MaterialParams
from .scanpath import ScanPath
from .thermal import LineSolutionCache, ThermalSimulator

__all__ = [
    "ObservationSpec",
    "VelocityBounds",
    "RewardConfig",
    "MeltPoolEnv",
    "EpisodeFinished",
    "rescale_action",
    "quantize_velocity",
    "whiten",
    "observe",
    "episode_return",
]


class EpisodeFinished(Exception):
    """step() called after the final control interval."""


@dataclass(frozen=True)
class ObservationSpec:
    """Local heat-map crops fed to the policy."""

    window_um: float = 160.0
    history: int = 3

    def cells(self, dx_um: float) -> int:
        n = self.window_um / dx_um
        if abs(n - round(n)) > 1e-9:
            raise ValueError("observation window must be divisible by dx")
        return int(round(n))


@dataclass(frozen=True)
class VelocityBounds:
    v_min: float = 0.1
    v_max: float = 2.0
    resolution: float = 0.01  # commanded speeds snap to this grid (bounds the solution cache)

    def __post_init__(self):
        if not (0.0 < self.v_min < self.v_max):
            raise ValueError("need 0 < v_min < v_max")
        if self.resolution <= 0.0:
            raise ValueError("resolution must be > 0")


@dataclass(frozen=True)
class RewardConfig:
    target_depth_um: float = 55.0
    range_weight: float = 1.0
    range_normalizer_um: float | None = None  # defaults to the target depth

    def __post_init__(self):
        if self.target_depth_um <= 0.0:
            raise ValueError("target_depth_um must be > 0")

    @property
    def normalizer(self) -> float:
        return self.range_normalizer_um if self.range_normalizer_um is not None else self.target_depth_um


def rescale_action(a: float, b: VelocityBounds) -> float:
    """Affine map from [-1, 1] onto [v_min, v_max] (clamping out-of-range actions)."""
    a = float(np.clip(a, -1.0, 1.0))
    return b.v_min + 0.5 * (a + 1.0) * (b.v_max - b.v_min)


def quantize_velocity(v: float, b: VelocityBounds) -> float:
    """Snap a commanded velocity onto the bounds' resolution grid."""
    q = b.v_min + round((v - b.v_min) / b.resolution) * b.resolution
    return float(min(max(q, b.v_min), b.v_max))


def whiten(maps: np.ndarray, *, std_floor: float = 1e-3) -> np.ndarray:
    """Zero-mean unit-std normalization over all values jointly, flattened.

    The std is floored so a uniform field maps to all zeros instead of
    blowing up.
    """
    flat = np.asarray(maps, dtype=float).ravel()
    mean = flat.mean()
    std = flat.std()
    return (flat - mean) / max(std, std_floor)


def _axis_take(arr: np.ndarray, axis: int, idx: np.ndarray, bc: BoundaryCondition) -> np.ndarray:
    """Gather along one axis with out-of-range indices mapped by the face rules.

    Adiabatic faces mirror (ghost -1-k reads cell k); fixed faces read
    2*T_ref minus the mirrored cell.
    """
    n = arr.shape[axis]
    taken_idx = idx.copy()
    scale = np.ones(idx.shape)
    offset = np.zeros(idx.shape)
    lo = idx < 0
    hi = idx >= n
    taken_idx[lo] = -1 - idx[lo]
    taken_idx[hi] = 2 * n - 1 - idx[hi]
    for side, mask in ((0, lo), (1, hi)):
        rule = bc.face(axis, side)
        if rule.kind != ADIABATIC and mask.any():
            scale[mask] = -1.0
            offset[mask] = 2.0 * rule.temp
    out = np.take(arr, taken_idx, axis=axis)
    shape = [1, 1, 1]
    shape[axis] = len(idx)
    return offset.reshape(shape) + scale.reshape(shape) * out


def observe(
    field,
    laser_um: tuple[float, float],
    spec: ObservationSpec,
    bc: BoundaryCondition,
) -> np.ndarray:
    """Three raw crops around the laser: surface (x-y), x-z and y-z sections.

    Crops are cell-aligned on the cell containing the laser; the depth
    sections span the window downward from the surface.  Crops reaching
    past a face are padded by that face's boundary rule.
    """
    grid: GridSpec = field.grid
    c = spec.cells(grid.dx_um)
    ci, cj = grid.cell_of(*laser_um)
    ix = np.arange(ci - c // 2 + 1, ci + c // 2 + 1)
    iy = np.arange(cj - c // 2 + 1, cj + c // 2 + 1)
    iz = np.arange(c)

    sub = _axis_take(field.values, 0, ix, bc)
    sub = _axis_take(sub, 1, iy, bc)
    sub = _axis_take(sub, 2, iz, bc)
    xy = sub[:, :, 0]
    xz = sub[:, c // 2 - 1, :]  # the laser's y cell
    yz = sub[c // 2 - 1, :, :]
    return np.stack([xy, xz, yz])


def _step_term(depth_um: float, cfg: RewardConfig) -> float:
    return 1.0 - abs(cfg.target_depth_um - depth_um) / (0.5 * cfg.target_depth_um)


def _range_penalty(depths, cfg: RewardConfig) -> float:
    d = np.asarray(depths, dtype=float)
    return cfg.range_weight * (d.max() - d.min()) / cfg.normalizer


def episode_return(depths, cfg: RewardConfig) -> float:
    """Total reward of a depth trace: per-step depth-error terms plus the
    terminal spread penalty, accumulated exactly as the env emits them."""
    depths = list(depths)
    if not depths:
        raise ValueError("empty trace")
    total = 0.0
    for i, d in enumerate(depths):
        r = _step_term(d, cfg)
        if i == len(depths) - 1:
            r -= _range_penalty(depths, cfg)
        total += r
    return total


class MeltPoolEnv:
    """Laser-velocity control over one scan path.

    The physics is deterministic: (seed, action sequence) fully determines
    the episode.  One instance per worker; instances may share a line
    solution cache.
    """

    def __init__(
        self,
        material: MaterialParams,
        laser: LaserParams,
        grid: GridSpec,
        path: ScanPath,
        bc: BoundaryCondition | None = None,
        bounds: VelocityBounds | None = None,
        reward: RewardConfig | None = None,
        obs_spec: ObservationSpec | None = None,
        *,
        cache: LineSolutionCache | None = None,
    ):
        self.bc = bc if bc is not None else BoundaryCondition()
        self.sim = ThermalSimulator(material, laser, grid, self.bc, cache=cache)
        path.check_domain(grid.extent_um[:2])
        self.path = path
        self.bounds = bounds if bounds is not None else VelocityBounds()
        self.reward_cfg = reward if reward is not None else RewardConfig()
        self.obs_spec = obs_spec if obs_spec is not None else ObservationSpec()
        self.seed = 0
        self._history: list[np.ndarray] = []
        self.cursor = 0
        self.trace = MeltDepthTrace()
        self.log_rows: list[tuple] = []

    @property
    def n_steps(self) -> int:
        return self.path.n_steps

    @property
    def obs_dim(self) -> int:
        c = self.obs_spec.cells(self.sim.grid.dx_um)
        return 3 * self.obs_spec.history * c * c

    def _assemble(self) -> np.ndarray:
        return whiten(np.stack(self._history))

    def reset(self, seed: int = 0) -> np.ndarray:
        self.seed = int(seed)
        self.sim.reset()
        self.cursor = 0
        self.trace = MeltDepthTrace()
        self.log_rows = []
        first = self.path.controls[0].start
        maps = observe(self.sim.field, first, self.obs_spec, self.bc)
        self._history = [maps.copy() for _ in range(self.obs_spec.history)]
        return self._assemble()

    @property
    def done(self) -> bool:
        return self.cursor >= self.path.n_steps

    def step(self, action: float) -> tuple[np.ndarray, float, bool]:
        if self.done:
            raise EpisodeFinished("episode already complete; call reset()")
        v = quantize_velocity(rescale_action(action, self.bounds), self.bounds)
        ctrl = self.path.controls[self.cursor]
        self.sim.advance(ctrl.start, ctrl.end, v)
        s = sample_depth(self.sim.field, self.sim.material, self.sim.time, ctrl.end)
        self.trace.append(s)
        self.cursor += 1
        reward = _step_term(s.depth_um, self.reward_cfg)
        done = self.done
        if done:
            reward -= _range_penalty(self.trace.depths(), self.reward_cfg)
        maps = observe(self.sim.field, ctrl.end, self.obs_spec, self.bc)
        self._history = self._history[1:] + [maps]
        self.log_rows.append((self.cursor - 1, ctrl.end[0], ctrl.end[1], v, s.depth_um, reward))
        return self._assemble(), float(reward), done

    def write_episode_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("step,x_um,y_um,v_mps,depth_um,reward\n")
            for row in self.log_rows:
                fh.write("%d,%.10g,%.10g,%.10g,%.10g,%.10g\n" % row)
