"""Power calibration: find the laser power whose steady straight-track depth
hits a target at a given velocity.

The simulator is linear in power (the source rise scales with P, diffusion
and superposition are linear), so one reference simulation is enough: the
depth at any power is the depth of the scaled rise field.  Bisection on
the scale then costs nothing.
"""
from __future__ import annotations

import numpy as np

from .meltpool import melt_depth
from .params import BoundaryCondition, GridSpec, LaserParams, MaterialParams
from .thermal import TemperatureField, ThermalSimulator

__all__ = [
    "NotBracketed",
    "steady_track_fields",
    "depth_at_power",
    "calibrate_power",
    "calibrate_power_for_path",
]

REFERENCE_POWER = 100.0


class NotBracketed(Exception):
    """Target depth not reachable within (0, p_max]."""


def steady_track_fields(
    m: MaterialParams,
    sigma_um: float,
    velocity: float,
    *,
    track_um: float = 800.0,
    interval_um: float = 50.0,
    dx_um: float = 20.0,
):
    """Simulate one straight track at the reference power on a roomy grid.

    Returns the rise fields (values minus ambient) and laser positions for
    the samples in the final quarter of the track, where the depth has
    settled.
    """
    margin = 400.0
    nx = int(np.ceil((track_um + 2 * margin) / dx_um))
    ny = int(np.ceil(2 * margin / dx_um))
    grid = GridSpec(dx_um=dx_um, nx=nx, ny=ny, nz=16)
    laser = LaserParams(power=REFERENCE_POWER, beam_sigma_um=sigma_um)
    sim = ThermalSimulator(m, laser, grid, BoundaryCondition())
    y = 0.5 * grid.extent_um[1]
    n_steps = int(round(track_um / interval_um))
    rises = []
    lasers = []
    keep_from = int(np.ceil(0.75 * n_steps))
    for k in range(n_steps):
        a = (margin + k * interval_um, y)
        b = (margin + (k + 1) * interval_um, y)
        sim.advance(a, b, velocity)
        if k >= keep_from:
            rises.append(sim.field.values - m.ambient_temp)
            lasers.append(b)
    return grid, rises, lasers


def depth_at_power(m, grid, rises, lasers, power: float) -> float:
    """Median settled depth for a given power, from the reference rise fields."""
    scale = power / REFERENCE_POWER
    depths = []
    for rise, laser in zip(rises, lasers):
        f = TemperatureField(grid, m.ambient_temp + scale * rise, m.ambient_temp)
        depths.append(melt_depth(f, m, laser))
    return float(np.median(depths))


def _bisect_power(eval_depth, target_um: float, p_max: float, tol_um: float) -> float:
    if eval_depth(p_max) < target_um:
        raise NotBracketed(f"target {target_um} um not reachable below {p_max} W")
    lo, hi = 0.0, p_max
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        d = eval_depth(mid)
        if abs(d - target_um) < tol_um:
            return mid
        if d < target_um:
            lo = mid
        else:
            hi = mid
    raise NotBracketed("bisection failed to converge")


def calibrate_power(
    m: MaterialParams,
    sigma_um: float,
    velocity: float,
    target_um: float,
    *,
    p_max: float = 2000.0,
    tol_um: float = 0.5,
    track_um: float = 800.0,
) -> float:
    """Bisect laser power until the steady straight-track depth hits the target."""
    if target_um <= 0.0:
        return 0.0
    grid, rises, lasers = steady_track_fields(m, sigma_um, velocity, track_um=track_um)
    return _bisect_power(
        lambda p: depth_at_power(m, grid, rises, lasers, p), target_um, p_max, tol_um
    )


def calibrate_power_for_path(
    m: MaterialParams,
    sigma_um: float,
    grid: GridSpec,
    bc: BoundaryCondition,
    path,
    velocity: float,
    target_um: float,
    *,
    p_max: float = 2000.0,
    tol_um: float = 0.5,
) -> float:
    """Power whose constant-velocity run over a whole path has median depth
    at the target; accounts for the heat the raster banks up, which an
    isolated straight track does not see."""
    if target_um <= 0.0:
        return 0.0
    laser = LaserParams(power=REFERENCE_POWER, beam_sigma_um=sigma_um)
    sim = ThermalSimulator(m, laser, grid, bc)
    rises = []
    lasers = []
    for c in path.controls:
        sim.advance(c.start, c.end, velocity)
        rises.append(sim.field.values - m.ambient_temp)
        lasers.append(c.end)

    def eval_depth(power: float) -> float:
        scale = power / REFERENCE_POWER
        depths = []
        for rise, laser_pos in zip(rises, lasers):
            f = TemperatureField(grid, m.ambient_temp + scale * rise, m.ambient_temp)
            depths.append(melt_depth(f, m, laser_pos))
        return float(np.median(depths))

    return _bisect_power(eval_depth, target_um, p_max, tol_um)
