"""Field snapshot serialization: headered binary dumps and a surface CSV slice."""
from __future__ import annotations

import struct

import numpy as np

from .params import GridSpec
from .thermal import TemperatureField

MAGIC = b"MSRL"
VERSION = 1

__all__ = ["write_snapshot", "read_snapshot", "write_surface_csv"]


def write_snapshot(field: TemperatureField, path) -> None:
    """Binary dump: magic, version u32, nx ny nz u32, dx f64 (um), temps f64.

    Temperatures are written little-endian in x-fastest order.
    """
    g = field.grid
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIII", VERSION, g.nx, g.ny, g.nz))
        fh.write(struct.pack("<d", g.dx_um))
        fh.write(np.asarray(field.values, dtype="<f8").ravel(order="F").tobytes())


def read_snapshot(path, ref_temp: float | None = None) -> TemperatureField:
    """Read a snapshot back; ref_temp defaults to the field minimum."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"not a field snapshot (magic {magic!r})")
        version, nx, ny, nz = struct.unpack("<IIII", fh.read(16))
        if version != VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        (dx_um,) = struct.unpack("<d", fh.read(8))
        raw = fh.read(8 * nx * ny * nz)
    vals = np.frombuffer(raw, dtype="<f8").reshape((nx, ny, nz), order="F").copy()
    grid = GridSpec(dx_um=dx_um, nx=nx, ny=ny, nz=nz)
    if ref_temp is None:
        ref_temp = float(vals.min())
    return TemperatureField(grid, vals, ref_temp)


def write_surface_csv(field: TemperatureField, path) -> None:
    """Long-format CSV of the surface layer for plotting."""
    g = field.grid
    xs = g.x_coords_um()
    ys = g.y_coords_um()
    with open(path, "w") as fh:
        fh.write("x_um,y_um,T_K\n")
        for i in range(g.nx):
            for j in range(g.ny):
                fh.write("%.10g,%.10g,%.10g\n" % (xs[i], ys[j], field.values[i, j, 0]))
