"""Independent explicit finite-difference reference for validating the
stored-line-solution simulator.

Solves dT/dt = D lap T + source on the same grid with a stability-limited
timestep and a moving Gaussian surface flux.  The Laplacian is the
fourth-order five-point-per-axis stencil so that the reference's own
dispersion error at the beam scale stays below the tolerance it is used to
enforce; faces are zero-flux (half-sample mirror), matching the adiabatic
convention of the code under test.
"""
import numpy as np

_C4 = np.array([-1.0 / 12, 4.0 / 3, -5.0 / 2, 4.0 / 3, -1.0 / 12])


def _laplacian4(T: np.ndarray) -> np.ndarray:
    Tp = np.pad(T, 2, mode="symmetric")
    out = np.zeros_like(T)
    n0, n1, n2 = Tp.shape
    for k, w in zip(range(-2, 3), _C4):
        out += w * Tp[2 + k : n0 - 2 + k, 2:-2, 2:-2]
        out += w * Tp[2:-2, 2 + k : n1 - 2 + k, 2:-2]
        out += w * Tp[2:-2, 2:-2, 2 + k : n2 - 2 + k]
    return out


def fd_moving_source(material, laser, grid, start_um, track_len_um, velocity, *, dt_frac=0.25):
    """Temperature field after one straight +x track, explicit FD.

    dt_frac scales the explicit 7-point stability bound dx^2/(6 D); 0.25
    is comfortably stable for the wider stencil as well.
    """
    D = material.diffusivity
    dx = grid.dx_um * 1e-6
    dt = dt_frac * dx * dx / (6.0 * D)
    t_total = track_len_um * 1e-6 / velocity
    n_steps = int(np.ceil(t_total / dt))
    dt = t_total / n_steps
    T = np.full(grid.shape, material.ambient_temp)
    xs = grid.x_coords_um() * 1e-6
    ys = grid.y_coords_um() * 1e-6
    x0 = start_um[0] * 1e-6
    y0 = start_um[1] * 1e-6
    sig2 = laser.sigma_m**2
    vol = (
        material.absorptivity
        * laser.power
        / (2 * np.pi * sig2)
        / (material.density * material.heat_capacity * dx)
    )
    lam = D * dt / dx**2
    for k in range(n_steps):
        xc = x0 + velocity * (k + 0.5) * dt
        gx = np.exp(-((xs - xc) ** 2) / (2 * sig2))
        gy = np.exp(-((ys - y0) ** 2) / (2 * sig2))
        T = T + lam * _laplacian4(T)
        T[:, :, 0] += dt * vol * gx[:, None] * gy[None, :]
    return T
