"""Benchmark laser trajectories and their subdivision into control intervals.

Two parametric families: a serpentine cross-hatch raster and an inward
triangular spiral.  Every lased segment is chopped into nominal 50 um
control intervals over which one velocity command is held; direction
changes never fall inside an interval.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Segment",
    "ControlInterval",
    "ScanPath",
    "DomainOverflow",
    "cross_hatch",
    "concentric_triangles",
    "segment_controls",
]


class DomainOverflow(Exception):
    """Path would leave the build domain."""


@dataclass(frozen=True)
class Segment:
    start: tuple[float, float]
    end: tuple[float, float]

    @property
    def length_um(self) -> float:
        return float(np.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1]))

    @property
    def heading(self) -> float:
        return float(np.arctan2(self.end[1] - self.start[1], self.end[0] - self.start[0]))

    def __post_init__(self):
        if self.length_um <= 0.0:
            raise ValueError("segment must have positive length")


@dataclass(frozen=True)
class ControlInterval:
    seg_idx: int
    ctrl_idx: int
    start: tuple[float, float]
    end: tuple[float, float]
    heading: float
    length_um: float


def segment_controls(segments: list[Segment], interval_um: float = 50.0) -> list[ControlInterval]:
    """Split each segment into equal control pieces plus a shorter remainder.

    The pieces partition the segment exactly: concatenated interval
    endpoints reproduce the segment endpoints.
    """
    if interval_um <= 0.0:
        raise ValueError("interval_um must be > 0")
    controls: list[ControlInterval] = []
    idx = 0
    for si, seg in enumerate(segments):
        L = seg.length_um
        n = int(np.ceil(L / interval_um - 1e-12))
        sx, sy = seg.start
        dx = seg.end[0] - sx
        dy = seg.end[1] - sy
        prev = seg.start
        for p in range(n):
            s_end = min((p + 1) * interval_um, L)
            if p == n - 1:
                point = seg.end
            else:
                t = s_end / L
                point = (sx + t * dx, sy + t * dy)
            controls.append(
                ControlInterval(si, idx, prev, point, seg.heading, s_end - p * interval_um)
            )
            prev = point
            idx += 1
    return controls


@dataclass
class ScanPath:
    """Ordered lased segments with their control subdivision."""

    segments: list[Segment]
    interval_um: float = 50.0

    def __post_init__(self):
        self.controls = segment_controls(self.segments, self.interval_um)

    @property
    def total_length_um(self) -> float:
        return float(sum(s.length_um for s in self.segments))

    @property
    def n_steps(self) -> int:
        return len(self.controls)

    def turn_points(self) -> list[tuple[float, float]]:
        """Vertices where the heading changes (heat-accumulation spots)."""
        return [s.end for s in self.segments[:-1]]

    def control_arc_ends(self) -> np.ndarray:
        """Cumulative arc length at the end of each control interval."""
        return np.cumsum([c.length_um for c in self.controls])

    def turn_arcs(self) -> np.ndarray:
        """Arc-length positions of the turn points."""
        arcs = np.cumsum([s.length_um for s in self.segments])
        return arcs[:-1]

    def bbox(self) -> tuple[float, float, float, float]:
        pts = [s.start for s in self.segments] + [s.end for s in self.segments]
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        return (min(xs), min(ys), max(xs), max(ys))

    def check_domain(self, extent_um: tuple[float, float]) -> None:
        x0, y0, x1, y1 = self.bbox()
        if x0 < -1e-9 or y0 < -1e-9 or x1 > extent_um[0] + 1e-9 or y1 > extent_um[1] + 1e-9:
            raise DomainOverflow(
                f"path bbox ({x0:.1f},{y0:.1f})-({x1:.1f},{y1:.1f}) um exceeds domain {extent_um}"
            )

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("seg_idx,ctrl_idx,x0_um,y0_um,x1_um,y1_um,heading_rad,len_um\n")
            for c in self.controls:
                fh.write(
                    "%d,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n"
                    % (
                        c.seg_idx,
                        c.ctrl_idx,
                        c.start[0],
                        c.start[1],
                        c.end[0],
                        c.end[1],
                        c.heading,
                        c.length_um,
                    )
                )


def cross_hatch(
    length_um: float,
    hatch_um: float,
    rows: int,
    *,
    start_um: tuple[float, float] = (0.0, 0.0),
    interval_um: float = 50.0,
    domain_um: tuple[float, float] | None = None,
) -> ScanPath:
    """Serpentine raster: alternating +x/-x passes joined by lased +y jogs."""
    if length_um <= 0.0 or hatch_um <= 0.0:
        raise ValueError("length_um and hatch_um must be > 0")
    if rows < 1:
        raise ValueError("rows must be >= 1")
    segs: list[Segment] = []
    x0, y0 = start_um
    for k in range(rows):
        y = y0 + k * hatch_um
        if k % 2 == 0:
            segs.append(Segment((x0, y), (x0 + length_um, y)))
        else:
            segs.append(Segment((x0 + length_um, y), (x0, y)))
        if k < rows - 1:
            xj = x0 + length_um if k % 2 == 0 else x0
            segs.append(Segment((xj, y), (xj, y + hatch_um)))
    path = ScanPath(segs, interval_um)
    if domain_um is not None:
        path.check_domain(domain_um)
    return path


def concentric_triangles(
    domain_len_um: float,
    *,
    first_fraction: float = 0.75,
    shrink: float = 0.75,
    interior_deg: float = 60.0,
    min_len_um: float = 50.0,
    start_um: tuple[float, float] = (0.0, 0.0),
    turn_left: bool = True,
    interval_um: float = 50.0,
    domain_um: tuple[float, float] | None = None,
) -> ScanPath:
    """Inward triangular spiral: horizontal start, fixed pivot, geometric shrink.

    Segment i has length first_fraction * domain_len * shrink**i; consecutive
    segments enclose the given interior angle.  Stops once the next segment
    would be shorter than ``min_len_um``.
    """
    if not (0.0 < shrink < 1.0):
        raise ValueError("shrink must be in (0, 1)")
    if min_len_um < interval_um:
        raise ValueError("min_len_um must be at least one control interval")
    turn = np.pi - np.deg2rad(interior_deg)
    if not turn_left:
        turn = -turn
    segs: list[Segment] = []
    pos = np.asarray(start_um, dtype=float)
    heading = 0.0
    length = first_fraction * domain_len_um
    while length >= min_len_um:
        nxt = pos + length * np.array([np.cos(heading), np.sin(heading)])
        segs.append(Segment((pos[0], pos[1]), (nxt[0], nxt[1])))
        pos = nxt
        heading += turn
        length *= shrink
    if not segs:
        raise ValueError("first segment already below min_len_um")
    path = ScanPath(segs, interval_um)
    if domain_um is not None:
        path.check_domain(domain_um)
    return path
