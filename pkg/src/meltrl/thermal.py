"""Moving-source conduction on a 3D grid via stored line solutions.

One simulation step advances the temperature field by a control interval:
the existing heat diffuses (separable Gaussian convolution whose padding
encodes the boundary rules) and the analytic temperature rise of the
laser's short track over that interval is superimposed.  The track rise is
precomputed on a compact window ("line solution") and reused, translated
and rotated, for every step taken at the same velocity and duration.

Boundary interaction of the source is handled with virtual mirrored
sources: the stored window is y-symmetric about the track axis, so the
reflection of a placed track across any vertical wall plane (or the
bottom) is just another placement of the same window.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.ndimage import correlate1d
from scipy.special import erf

from .params import (
    ADIABATIC,
    UM,
    BoundaryCondition,
    GridSpec,
    LaserParams,
    MaterialParams,
    thermal_diffusivity,
)

__all__ = [
    "TemperatureField",
    "LineSolution",
    "MirrorPlane",
    "DiffusionKernel",
    "LineSolutionCache",
    "ThermalSimulator",
    "build_line_solution",
    "build_diffusion_kernel",
    "diffuse",
    "orient_and_add",
    "advance",
    "excess_enthalpy",
    "ThermalError",
    "WindowTooSmall",
    "QuadratureNotConverged",
    "OutOfDomain",
    "KernelTooLarge",
]


class ThermalError(Exception):
    pass


class WindowTooSmall(ThermalError):
    """Stored window border carries more temperature rise than allowed."""


class QuadratureNotConverged(ThermalError):
    """Successive quadrature refinements kept changing the peak."""


class OutOfDomain(ThermalError):
    """An interior placement would drop significant heat outside the field."""


class KernelTooLarge(ThermalError):
    """Diffusion kernel radius does not fit the grid."""


@dataclass
class TemperatureField:
    """Cell-centered temperature samples (K) over the build domain."""

    grid: GridSpec
    values: np.ndarray
    ref_temp: float

    @classmethod
    def uniform(cls, grid: GridSpec, temp: float) -> "TemperatureField":
        return cls(grid, np.full(grid.shape, float(temp)), float(temp))

    def copy(self) -> "TemperatureField":
        return TemperatureField(self.grid, self.values.copy(), self.ref_temp)


def excess_enthalpy(field: TemperatureField, m: MaterialParams) -> float:
    """Heat content above the reference temperature, sum (T - T0) rho c_p dx^3, in J."""
    cell_vol = (field.grid.dx_um * UM) ** 3
    return float(np.sum(field.values - field.ref_temp)) * m.density * m.heat_capacity * cell_vol


@dataclass(frozen=True)
class MirrorPlane:
    """Virtual-source mirror in the window's track-local frame.

    ``axis`` is 0 (along-track) or 1 (cross-track), ``pos_um`` the plane
    offset from the anchor, ``sign`` +1 for an insulated wall and -1 for a
    fixed-temperature wall.
    """

    axis: int
    pos_um: float
    sign: float = 1.0


INTERIOR: tuple[MirrorPlane, ...] = ()


@dataclass
class LineSolution:
    """Temperature rise of one short track, stored on a compact window.

    The track starts at the anchor and runs toward +x for
    ``velocity * duration``; values are the rise above ambient.  x-y
    samples sit on integer-minus-phase multiples of dx from the anchor
    (a nonzero ``phase`` pre-shifts the lattice so that a placement whose
    anchor has that fractional cell offset lands exactly on field samples),
    z samples at (k + 1/2) dx below the surface.
    """

    velocity: float
    duration: float
    values: np.ndarray
    variant: tuple[MirrorPlane, ...]
    anchor: tuple[int, int]
    dx_um: float
    border_threshold: float
    phase: tuple[float, float] = (0.0, 0.0)

    @property
    def track_len_um(self) -> float:
        return self.velocity * self.duration / UM

    @property
    def peak(self) -> float:
        return float(self.values.max(initial=0.0))

    def local_x_um(self) -> np.ndarray:
        return (np.arange(self.values.shape[0]) - self.anchor[0] - self.phase[0]) * self.dx_um

    def local_y_um(self) -> np.ndarray:
        return (np.arange(self.values.shape[1]) - self.anchor[1] - self.phase[1]) * self.dx_um


def _gauss_legendre_panels(n_panels: int, order: int, upper: float):
    """Composite Gauss-Legendre nodes/weights on [0, upper]."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, upper, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _evaluate_track_rise(m, l, velocity, duration, xs_m, ys_m, z_edges_m, mirrors, n_panels):
    """Quadrature of the moving-Gaussian-source rise over a sample lattice.

    Integrates over heat age with the substitution u = sqrt(age), which
    removes the integrable endpoint singularity.  Heat of age tau sits at
    x = V (dt - tau) along the track, with lateral variance sigma^2 + 2 D tau
    and depth variance 2 D tau; the surface-image factor 2 of the insulated
    top face is folded into the prefactor.  The depth profile is averaged
    over each cell (finite-volume semantics), which keeps the near-surface
    boundary layer's heat on the grid even when it is thinner than a cell.
    """
    D = thermal_diffusivity(m)
    sig2 = l.sigma_m**2
    pref = m.absorptivity * l.power / (m.density * m.heat_capacity * np.sqrt(4.0 * np.pi**3 * D))
    u, w = _gauss_legendre_panels(n_panels, 10, np.sqrt(duration))
    tau = u * u
    lat_var = sig2 + 2.0 * D * tau  # per-axis variance of the spread source
    amp = pref * w * 2.0 / lat_var
    xc = velocity * (duration - tau)

    fx = np.exp(-((xs_m[None, :] - xc[:, None]) ** 2) / (2.0 * lat_var[:, None]))
    fy = np.exp(-(ys_m[None, :] ** 2) / (2.0 * lat_var[:, None]))
    s = np.sqrt(4.0 * D * tau)  # erf scale of the depth profile
    dz = z_edges_m[1] - z_edges_m[0]
    cdf = erf(z_edges_m[None, :] / s[:, None])
    fz = (np.sqrt(np.pi) * s[:, None] / (2.0 * dz)) * np.diff(cdf, axis=1)
    for mir in mirrors:
        pos = mir.pos_um * UM
        if mir.axis == 0:
            fx = fx + mir.sign * np.exp(
                -(((2.0 * pos - xs_m[None, :]) - xc[:, None]) ** 2) / (2.0 * lat_var[:, None])
            )
        else:
            fy = fy + mir.sign * np.exp(
                -((2.0 * pos - ys_m[None, :]) ** 2) / (2.0 * lat_var[:, None])
            )
    return np.einsum("n,ni,nj,nk->ijk", amp, fx, fy, fz, optimize=True)


def build_line_solution(
    m: MaterialParams,
    l: LaserParams,
    velocity: float,
    duration: float,
    dx_um: float,
    variant: tuple[MirrorPlane, ...] = INTERIOR,
    *,
    margin_um: float | None = None,
    border_threshold: float = 0.1,
    rel_tol: float = 1e-4,
    phase: tuple[float, float] = (0.0, 0.0),
) -> LineSolution:
    """Precompute the temperature rise of one track step on its own window.

    The window is auto-sized (and grown if needed) until the rise at its
    border falls below ``border_threshold`` kelvin; passing ``margin_um``
    pins the size instead and raises :class:`WindowTooSmall` on violation.
    Quadrature panels are doubled until the peak changes by less than
    ``rel_tol`` relative, else :class:`QuadratureNotConverged`.
    """
    if duration <= 0.0:
        raise ValueError("duration must be > 0")
    if velocity < 0.0:
        raise ValueError("velocity must be >= 0")
    D = thermal_diffusivity(m)
    track_m = velocity * duration
    auto = margin_um is None
    if auto:
        margin_m = 4.0 * np.sqrt(4.0 * D * duration) + 4.0 * np.sqrt(l.sigma_m**2 + 2.0 * D * duration)
    else:
        margin_m = margin_um * UM

    dx_m = dx_um * UM
    for _ in range(6):
        ai = int(np.ceil(margin_m / dx_m)) + 1
        nwx = ai + int(np.ceil((track_m + margin_m) / dx_m)) + 2
        aj = ai
        nwy = 2 * aj + 1
        nwz = max(2, int(np.ceil(margin_m / dx_m)))
        xs = (np.arange(nwx) - ai - phase[0]) * dx_m
        ys = (np.arange(nwy) - aj - phase[1]) * dx_m
        z_edges = np.arange(nwz + 1) * dx_m

        vals = None
        peak = None
        n_panels = 8
        for _ in range(7):
            cand = _evaluate_track_rise(m, l, velocity, duration, xs, ys, z_edges, variant, n_panels)
            cpeak = float(np.abs(cand).max())
            if peak is not None and abs(cpeak - peak) <= rel_tol * max(cpeak, 1e-30):
                vals = cand
                break
            vals, peak = cand, cpeak
            n_panels *= 2
        else:
            raise QuadratureNotConverged(
                f"peak still moving after {n_panels // 2} panels (rel_tol={rel_tol})"
            )

        border = max(
            float(np.abs(vals[0]).max()),
            float(np.abs(vals[-1]).max()),
            float(np.abs(vals[:, 0]).max()),
            float(np.abs(vals[:, -1]).max()),
            float(np.abs(vals[:, :, -1]).max()),
        )
        if border < border_threshold or l.power == 0.0:
            return LineSolution(
                velocity, duration, vals, variant, (ai, aj), dx_um, border_threshold, phase
            )
        if not auto:
            raise WindowTooSmall(
                f"border rise {border:.3g} K exceeds {border_threshold} K at margin {margin_um} um"
            )
        margin_m *= 1.6
    raise WindowTooSmall("window did not reach the border threshold while auto-growing")


@dataclass(frozen=True)
class DiffusionKernel:
    """Separable Gaussian blur profile for one diffusion interval."""

    radius: int
    weights: np.ndarray  # length 2*radius + 1, sums to 1
    dt: float
    diffusivity: float


def build_diffusion_kernel(D: float, dt: float, dx_m: float) -> DiffusionKernel:
    """1D Gaussian profile with std sqrt(2 D dt)/dx cells, radius ceil(4 std)."""
    if D <= 0.0 or dt <= 0.0 or dx_m <= 0.0:
        raise ValueError("D, dt and dx must all be > 0")
    std = np.sqrt(2.0 * D * dt) / dx_m
    if std < 0.01:
        return DiffusionKernel(0, np.array([1.0]), dt, D)
    radius = int(np.ceil(4.0 * std))
    k = np.arange(-radius, radius + 1)
    w = np.exp(-0.5 * (k / std) ** 2)
    w /= w.sum()
    return DiffusionKernel(radius, w, dt, D)


def _ghost_slab(vals: np.ndarray, axis: int, side: int, r: int, rule) -> np.ndarray:
    """Boundary padding slab: mirrored cells, optionally reflected about a held temperature."""
    n = vals.shape[axis]
    if side == 0:
        sl = [slice(None)] * 3
        sl[axis] = slice(0, r)
        slab = np.flip(vals[tuple(sl)], axis=axis)
    else:
        sl = [slice(None)] * 3
        sl[axis] = slice(n - r, n)
        slab = np.flip(vals[tuple(sl)], axis=axis)
    if rule.kind == ADIABATIC:
        return slab
    return 2.0 * rule.temp - slab


def diffuse(field: TemperatureField, kernel: DiffusionKernel, bc: BoundaryCondition) -> TemperatureField:
    """Apply one diffusion interval (in place) via separable convolution."""
    r = kernel.radius
    if r == 0:
        return field
    if r >= min(field.grid.shape):
        raise KernelTooLarge(f"radius {r} vs grid {field.grid.shape}")
    vals = field.values
    for axis in range(3):
        lo = _ghost_slab(vals, axis, 0, r, bc.face(axis, 0))
        hi = _ghost_slab(vals, axis, 1, r, bc.face(axis, 1))
        padded = np.concatenate([lo, vals, hi], axis=axis)
        out = correlate1d(padded, kernel.weights, axis=axis, mode="nearest")
        sl = [slice(None)] * 3
        sl[axis] = slice(r, r + vals.shape[axis])
        vals = out[tuple(sl)]
    field.values = np.ascontiguousarray(vals)
    return field


def _snap(a: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    rounded = np.round(a)
    close = np.abs(a - rounded) < tol
    return np.where(close, rounded, a)


def _place(
    field: TemperatureField,
    ls: LineSolution,
    offset_um: tuple[float, float],
    lin: np.ndarray,
    *,
    sign: float = 1.0,
    z_mirrored: bool = False,
    allow_clip: bool = False,
) -> None:
    """Scatter-add the window into the field under an affine x-y map.

    Each source sample distributes its value to its four neighbouring field
    cells with bilinear weights, so placed heat content matches the stored
    window exactly up to clipping.  ``lin`` maps track-local offsets (um) to
    lab offsets; z layers map one-to-one, or reflected across the bottom
    face when ``z_mirrored``.
    """
    grid = field.grid
    vals = ls.values
    nwx, nwy, nwz = vals.shape
    lx = ls.local_x_um()
    ly = ls.local_y_um()
    px = offset_um[0] + lin[0, 0] * lx[:, None] + lin[0, 1] * ly[None, :]
    py = offset_um[1] + lin[1, 0] * lx[:, None] + lin[1, 1] * ly[None, :]

    fx = _snap((px - grid.origin_um[0]) / grid.dx_um)
    fy = _snap((py - grid.origin_um[1]) / grid.dx_um)
    ix = np.floor(fx).astype(np.int64)
    iy = np.floor(fy).astype(np.int64)
    wx = fx - ix
    wy = fy - iy

    if z_mirrored:
        kz = 2 * grid.nz - 1 - np.arange(nwz)
    else:
        kz = np.arange(nwz)
    z_ok = (kz >= 0) & (kz < grid.nz)

    if not allow_clip:
        support = np.abs(vals).max(axis=2) > ls.border_threshold
        clipped_xy = (fx < 0.0) | (fx > grid.nx - 1.0) | (fy < 0.0) | (fy > grid.ny - 1.0)
        if np.any(support & clipped_xy):
            raise OutOfDomain("window support falls outside the domain; use a boundary variant")
        if not np.all(z_ok):
            deep = np.abs(vals[:, :, ~z_ok]).max(initial=0.0)
            if deep > ls.border_threshold:
                raise OutOfDomain("window support extends below the domain")

    src2d = vals.reshape(nwx * nwy, nwz)[:, z_ok]
    dest_k = kz[z_ok]
    tgt = field.values.reshape(grid.nx * grid.ny, grid.nz)
    nxy = grid.nx * grid.ny
    for di, dj, w in (
        (0, 0, (1.0 - wx) * (1.0 - wy)),
        (1, 0, wx * (1.0 - wy)),
        (0, 1, (1.0 - wx) * wy),
        (1, 1, wx * wy),
    ):
        ci = ix + di
        cj = iy + dj
        ok = (ci >= 0) & (ci < grid.nx) & (cj >= 0) & (cj < grid.ny) & (w > 0.0)
        if not np.any(ok):
            continue
        flat = (ci[ok] * grid.ny + cj[ok]).ravel()
        contrib = src2d[ok.ravel()] * (sign * w[ok].ravel())[:, None]
        for col, k in enumerate(dest_k):
            tgt[:, k] += np.bincount(flat, weights=contrib[:, col], minlength=nxy)


def _rotation(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    lin = np.array([[c, -s], [s, c]])
    lin[np.abs(lin) < 1e-12] = 0.0
    lin[np.abs(lin - 1.0) < 1e-12] = 1.0
    lin[np.abs(lin + 1.0) < 1e-12] = -1.0
    return lin


def orient_and_add(
    field: TemperatureField,
    ls: LineSolution,
    start_um: tuple[float, float],
    angle: float,
) -> TemperatureField:
    """Rotate the stored window about its anchor, translate to ``start_um``, add.

    Interior windows must land entirely inside the domain
    (:class:`OutOfDomain` otherwise); boundary variants may clip, since the
    mirrored contribution they carry re-folds the heat that leaves.
    """
    _place(
        field,
        ls,
        start_um,
        _rotation(angle),
        allow_clip=bool(ls.variant),
    )
    return field


class LineSolutionCache:
    """Read-mostly cache of interior line solutions keyed by (velocity, duration).

    Concurrent reads are safe; insertion is serialized by a lock.
    """

    def __init__(self, m: MaterialParams, l: LaserParams, dx_um: float, *, border_threshold: float = 0.1):
        self.material = m
        self.laser = l
        self.dx_um = dx_um
        self.border_threshold = border_threshold
        self._store: dict[tuple, LineSolution] = {}
        self._lock = threading.Lock()

    def get(
        self, velocity: float, duration: float, phase: tuple[float, float] = (0.0, 0.0)
    ) -> LineSolution:
        key = (round(velocity, 10), round(duration, 14), round(phase[0], 6), round(phase[1], 6))
        ls = self._store.get(key)
        if ls is not None:
            return ls
        ls = build_line_solution(
            self.material,
            self.laser,
            velocity,
            duration,
            self.dx_um,
            border_threshold=self.border_threshold,
            phase=phase,
        )
        with self._lock:
            return self._store.setdefault(key, ls)

    def __len__(self) -> int:
        return len(self._store)


def _image_faces(grid: GridSpec, seg_a, seg_b, ls: LineSolution, lin: np.ndarray, d_img_um: float):
    """Wall planes whose virtual source must be included for this placement.

    Per axis the nearest lateral face is mirrored when the segment comes
    within the image distance of it or the placed window pokes past it;
    the bottom face likewise.  Returns possibly-empty per-axis mirror
    specs: (axis, plane_um, side).
    """
    lx = ls.local_x_um()
    ly = ls.local_y_um()
    corners_local = np.array(
        [[lx[0], ly[0]], [lx[-1], ly[0]], [lx[0], ly[-1]], [lx[-1], ly[-1]]]
    )
    corners = np.asarray(seg_a)[None, :] + corners_local @ lin.T
    ext = grid.extent_um
    mirrors = []
    for axis in range(2):
        seg_lo = min(seg_a[axis], seg_b[axis])
        seg_hi = max(seg_a[axis], seg_b[axis])
        box_lo = corners[:, axis].min()
        box_hi = corners[:, axis].max()
        near_lo = (seg_lo < d_img_um) or (box_lo < 0.0)
        near_hi = (ext[axis] - seg_hi < d_img_um) or (box_hi > ext[axis])
        if near_lo and near_hi:
            # keep only the closer wall; double reflections are negligible here
            if seg_lo <= ext[axis] - seg_hi:
                near_hi = False
            else:
                near_lo = False
        if near_lo:
            mirrors.append((axis, 0.0, 0))
        elif near_hi:
            mirrors.append((axis, ext[axis], 1))
    depth_um = ext[2]
    window_depth = ls.values.shape[2] * ls.dx_um
    if depth_um < d_img_um or window_depth > depth_um:
        mirrors.append((2, depth_um, 1))
    return mirrors


def _lattice_phase(grid: GridSpec, anchor_um, lin: np.ndarray, quantum: float = 0.25):
    """Window lattice phase that makes an axis-aligned placement land on samples.

    Only signed-permutation maps (headings that are multiples of 90 degrees)
    can be phase-corrected; rotated placements fall back to the canonical
    window and bilinear scatter.  Phases are quantized so the cache stays
    bounded; the sub-quantum remainder is handled by the scatter weights.
    """
    if not np.all(np.isin(lin, (-1.0, 0.0, 1.0))):
        return (0.0, 0.0)
    frac = [
        (anchor_um[0] - grid.origin_um[0]) / grid.dx_um % 1.0,
        (anchor_um[1] - grid.origin_um[1]) / grid.dx_um % 1.0,
    ]
    phase = [0.0, 0.0]
    for lab_axis in range(2):
        for loc_axis in range(2):
            s = lin[lab_axis, loc_axis]
            if s != 0.0:
                phase[loc_axis] = (s * frac[lab_axis]) % 1.0
    return (round(phase[0] / quantum) * quantum % 1.0, round(phase[1] / quantum) * quantum % 1.0)


def advance(
    field: TemperatureField,
    m: MaterialParams,
    l: LaserParams,
    bc: BoundaryCondition,
    seg_start_um: tuple[float, float],
    seg_end_um: tuple[float, float],
    velocity: float,
    *,
    cache: LineSolutionCache | None = None,
    img_factor: float = 4.0,
) -> tuple[TemperatureField, float]:
    """Advance the field over one lased segment at the given speed.

    Diffuses the existing heat for dt = |segment| / velocity, then places
    the matching line solution (plus any virtual mirrored copies near the
    walls).  Returns the field and dt.
    """
    if velocity <= 0.0:
        raise ValueError("velocity must be > 0")
    a = np.asarray(seg_start_um, dtype=float)
    b = np.asarray(seg_end_um, dtype=float)
    seg_m = float(np.hypot(*(b - a))) * UM
    if seg_m <= 0.0:
        raise ValueError("segment must have positive length")
    dt = seg_m / velocity
    D = thermal_diffusivity(m)

    kernel = build_diffusion_kernel(D, dt, field.grid.dx_um * UM)
    diffuse(field, kernel, bc)

    if cache is None:
        cache = LineSolutionCache(m, l, field.grid.dx_um)
    angle = float(np.arctan2(b[1] - a[1], b[0] - a[0]))
    lin = _rotation(angle)
    ls = cache.get(velocity, dt, phase=_lattice_phase(field.grid, a, lin))
    d_img_um = img_factor * np.sqrt(4.0 * D * dt) / UM
    mirrors = _image_faces(field.grid, a, b, ls, lin, d_img_um)

    face_sign = {}
    for axis, plane, side in mirrors:
        rule = bc.face(axis, side)
        face_sign[(axis, plane)] = 1.0 if rule.kind == ADIABATIC else -1.0

    placements = [(a.copy(), lin, 1.0, False)]
    for axis, plane, _side in mirrors:
        sgn = face_sign[(axis, plane)]
        reflected = []
        for off, pl_lin, pl_sign, zm in placements:
            off2 = off.copy()
            lin2 = pl_lin.copy()
            if axis == 2:
                reflected.append((off2, lin2, pl_sign * sgn, not zm))
            else:
                off2[axis] = 2.0 * plane - off2[axis]
                lin2[axis, :] = -lin2[axis, :]
                reflected.append((off2, lin2, pl_sign * sgn, zm))
        placements.extend(reflected)

    for off, pl_lin, pl_sign, zm in placements:
        _place(field, ls, (off[0], off[1]), pl_lin, sign=pl_sign, z_mirrored=zm, allow_clip=True)
    return field, dt


class ThermalSimulator:
    """Owns one temperature field and steps it along lased segments.

    Instances are single-threaded; independent instances may share the
    line-solution cache.
    """

    def __init__(
        self,
        material: MaterialParams,
        laser: LaserParams,
        grid: GridSpec,
        bc: BoundaryCondition | None = None,
        *,
        cache: LineSolutionCache | None = None,
        img_factor: float = 4.0,
    ):
        self.material = material
        self.laser = laser
        self.grid = grid
        self.bc = bc if bc is not None else BoundaryCondition()
        self.cache = cache if cache is not None else LineSolutionCache(material, laser, grid.dx_um)
        self.img_factor = img_factor
        self.field = TemperatureField.uniform(grid, material.ambient_temp)
        self.time = 0.0

    def reset(self) -> None:
        self.field.values.fill(self.material.ambient_temp)
        self.time = 0.0

    def advance(self, seg_start_um, seg_end_um, velocity: float) -> float:
        _, dt = advance(
            self.field,
            self.material,
            self.laser,
            self.bc,
            seg_start_um,
            seg_end_um,
            velocity,
            cache=self.cache,
            img_factor=self.img_factor,
        )
        self.time += dt
        return dt
