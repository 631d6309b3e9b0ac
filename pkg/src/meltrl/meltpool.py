"""Melt-pool depth extraction: the controlled quantity and reward input."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import MaterialParams
from .thermal import TemperatureField

__all__ = ["MeltDepthSample", "MeltDepthTrace", "surface_peak", "melt_depth", "sample_depth"]


@dataclass(frozen=True)
class MeltDepthSample:
    time_s: float
    x_um: float
    y_um: float
    depth_um: float
    peak_temp: float


@dataclass
class MeltDepthTrace:
    """Depth samples over one episode, strictly increasing in time."""

    samples: list[MeltDepthSample] = field(default_factory=list)

    def append(self, s: MeltDepthSample) -> None:
        if self.samples and s.time_s <= self.samples[-1].time_s:
            raise ValueError("trace times must be strictly increasing")
        self.samples.append(s)

    def depths(self) -> np.ndarray:
        return np.array([s.depth_um for s in self.samples])

    def __len__(self) -> int:
        return len(self.samples)

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t_s,x_um,y_um,depth_um,peak_K\n")
            for s in self.samples:
                fh.write(
                    "%.10g,%.10g,%.10g,%.10g,%.10g\n"
                    % (s.time_s, s.x_um, s.y_um, s.depth_um, s.peak_temp)
                )


def _parabolic_offset(fm: float, f0: float, fp: float) -> tuple[float, float]:
    """Sub-cell offset and value gain of the parabola through three samples."""
    denom = fm - 2.0 * f0 + fp
    if denom >= 0.0:  # not a local max; leave at the cell
        return 0.0, 0.0
    off = 0.5 * (fm - fp) / denom
    off = float(np.clip(off, -0.5, 0.5))
    return off, -0.25 * (fm - fp) * off


def surface_peak(
    field: TemperatureField, hint_um: tuple[float, float] | None = None
) -> tuple[float, float, float]:
    """Location and value of the surface-layer temperature maximum.

    The argmax cell is refined by local quadratic interpolation along x and
    y.  Ties (e.g. a uniform field) resolve toward the caller's hint.
    """
    grid = field.grid
    plane = field.values[:, :, 0]
    tmax = float(plane.max())
    if hint_um is None:
        hint_um = (
            grid.origin_um[0] + 0.5 * (grid.nx - 1) * grid.dx_um,
            grid.origin_um[1] + 0.5 * (grid.ny - 1) * grid.dx_um,
        )
    if tmax <= float(plane.min()):
        return (hint_um[0], hint_um[1], tmax)

    cand = np.argwhere(plane == tmax)
    if len(cand) > 1:
        hx = (hint_um[0] - grid.origin_um[0]) / grid.dx_um
        hy = (hint_um[1] - grid.origin_um[1]) / grid.dx_um
        d2 = (cand[:, 0] - hx) ** 2 + (cand[:, 1] - hy) ** 2
        i, j = cand[int(np.argmin(d2))]
    else:
        i, j = cand[0]

    off_x = off_y = 0.0
    gain = 0.0
    if 0 < i < grid.nx - 1:
        off_x, g = _parabolic_offset(plane[i - 1, j], plane[i, j], plane[i + 1, j])
        gain += g
    if 0 < j < grid.ny - 1:
        off_y, g = _parabolic_offset(plane[i, j - 1], plane[i, j], plane[i, j + 1])
        gain += g
    x = grid.origin_um[0] + (i + off_x) * grid.dx_um
    y = grid.origin_um[1] + (j + off_y) * grid.dx_um
    return (float(x), float(y), tmax + gain)


def _column_at(field: TemperatureField, x_um: float, y_um: float) -> np.ndarray:
    """Bilinear x-y sample of every z layer at one surface location."""
    grid = field.grid
    fx = np.clip((x_um - grid.origin_um[0]) / grid.dx_um, 0.0, grid.nx - 1.0)
    fy = np.clip((y_um - grid.origin_um[1]) / grid.dx_um, 0.0, grid.ny - 1.0)
    i = min(int(fx), grid.nx - 2)
    j = min(int(fy), grid.ny - 2)
    wx = fx - i
    wy = fy - j
    v = field.values
    return (
        (1 - wx) * (1 - wy) * v[i, j, :]
        + wx * (1 - wy) * v[i + 1, j, :]
        + (1 - wx) * wy * v[i, j + 1, :]
        + wx * wy * v[i + 1, j + 1, :]
    )


def melt_depth(
    field: TemperatureField,
    m: MaterialParams,
    hint_um: tuple[float, float] | None = None,
    *,
    tol_frac: float = 0.01,
) -> float:
    """Depth (um) of the deepest melting-point crossing under the surface peak.

    The temperature column below the refined surface maximum is scanned
    cell by cell; the bracketing interval is then narrowed by bisection of
    the linear interpolant down to ``tol_frac`` of a cell.  Returns 0 when
    nothing exceeds the melting temperature, and the full domain depth if
    even the deepest sample is molten.
    """
    grid = field.grid
    x, y, tpk = surface_peak(field, hint_um)
    if tpk <= m.melt_temp:
        return 0.0
    col = _column_at(field, x, y)
    dz = grid.dx_um
    zs = (np.arange(grid.nz) + 0.5) * dz

    above = col > m.melt_temp
    if not above.any():
        return 0.0
    k = int(np.max(np.nonzero(above)))
    if k == grid.nz - 1:
        return grid.nz * dz
    # bracket [z_k, z_{k+1}] with col[k] > T_melt >= col[k+1]
    lo, hi = zs[k], zs[k + 1]
    flo, fhi = col[k] - m.melt_temp, col[k + 1] - m.melt_temp
    if fhi == 0.0:
        return float(hi)
    while hi - lo > tol_frac * dz:
        mid = 0.5 * (lo + hi)
        fmid = flo + (fhi - flo) * (mid - lo) / (hi - lo)
        if fmid > 0.0:
            lo, flo = mid, fmid
        else:
            hi, fhi = mid, fmid
    return float(0.5 * (lo + hi))


def sample_depth(
    field: TemperatureField,
    m: MaterialParams,
    time_s: float,
    laser_um: tuple[float, float],
) -> MeltDepthSample:
    """One trace entry: depth and surface peak, tie-broken toward the laser."""
    x, y, tpk = surface_peak(field, laser_um)
    d = melt_depth(field, m, laser_um)
    return MeltDepthSample(time_s, x, y, d, tpk)
