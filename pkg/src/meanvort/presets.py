"""Initial data, pinning potentials and forcing fields for the standard scenarios.

Every profile is built from smooth pieces: patches use a C-infinity ramp of
width at least four cells, and localized data carry a smooth radial cutoff
so that nothing reaches the ring of radius ``l/4`` around the centre.
"""

from __future__ import annotations

import numpy as np

from .fields import Grid2D, PinningProfile, perp

INITIAL_PRESETS = ("uniform_patch", "gaussian", "mollified_ring", "zero")
PINNING_PRESETS = ("none", "cosine", "random", "file")
FORCING_PRESETS = ("none", "uniform", "cosine", "current", "file")


def smooth_step(u: np.ndarray) -> np.ndarray:
    """C-infinity transition from 0 (``u <= 0``) to 1 (``u >= 1``)."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
        b = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1.0 - u, 1.0)), 0.0)
    return a / (a + b)


def _periodic_offsets(grid: Grid2D, center) -> tuple[np.ndarray, np.ndarray]:
    """Minimum-image displacement from ``center`` to every node."""
    x, y = grid.coords
    l = grid.l
    dxs = (x - center[0] + 0.5 * l) % l - 0.5 * l
    dys = (y - center[1] + 0.5 * l) % l - 0.5 * l
    return dxs, dys


def radial_cutoff(grid: Grid2D, rho: np.ndarray) -> np.ndarray:
    """Equal to one well inside the box and zero beyond radius ``l/4``."""
    outer = 0.25 * grid.l
    width = 0.0625 * grid.l
    return smooth_step((outer - rho) / width)


def _center(grid: Grid2D, center):
    if center is None:
        return (0.5 * grid.l, 0.5 * grid.l)
    return (float(center[0]), float(center[1]))


def uniform_patch(grid: Grid2D, c: float, r: float, center=None) -> np.ndarray:
    """Disc of height ``c`` and radius ``r`` with a mollified edge.

    The edge ramp is centred on ``r`` and spans ``max(4 dx, 0.05 r)``.
    """
    if r <= 0:
        raise ValueError("patch radius must be positive")
    if r >= 0.25 * grid.l:
        raise ValueError(f"patch radius {r} must be below l/4 = {0.25 * grid.l}")
    ex, ey = _periodic_offsets(grid, _center(grid, center))
    rho = np.hypot(ex, ey)
    width = max(4.0 * grid.dx, 0.05 * r)
    return c * smooth_step((r - rho) / width + 0.5)


def gaussian(grid: Grid2D, sigma: float, center=None, amplitude: float = 1.0) -> np.ndarray:
    """Radial Gaussian of width ``sigma`` with a smooth cutoff at ``l/4``."""
    if sigma <= 0:
        raise ValueError("gaussian width must be positive")
    ex, ey = _periodic_offsets(grid, _center(grid, center))
    rho2 = ex * ex + ey * ey
    return amplitude * np.exp(-0.5 * rho2 / sigma**2) * radial_cutoff(grid, np.sqrt(rho2))


def mollified_ring(grid: Grid2D, r: float, sigma: float, center=None) -> np.ndarray:
    """Annulus of radius ``r`` with Gaussian cross-section of width ``sigma``."""
    if r <= 0 or sigma <= 0:
        raise ValueError("ring radius and width must be positive")
    if r >= 0.25 * grid.l:
        raise ValueError(f"ring radius {r} must be below l/4 = {0.25 * grid.l}")
    ex, ey = _periodic_offsets(grid, _center(grid, center))
    rho = np.hypot(ex, ey)
    return np.exp(-0.5 * ((rho - r) / sigma) ** 2) * radial_cutoff(grid, rho)


def preset_initial(
    grid: Grid2D,
    name: str,
    *,
    c: float = 1.0,
    radius: float = 1.0,
    sigma: float = 0.5,
    center=None,
    normalize: bool = False,
    zeta_amplitude: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Initial vorticity density and weighted divergence for a named scenario.

    Parameters
    ----------
    grid : Grid2D
    name : {"uniform_patch", "gaussian", "mollified_ring", "zero"}
    c : float
        Patch height (``uniform_patch``) or peak value (other shapes).
    radius, sigma : float
        Patch/ring radius and Gaussian width.
    center : pair of float, optional
        Defaults to the box centre.
    normalize : bool
        Rescale ``omega0`` to unit box integral.
    zeta_amplitude : float
        Amplitude of a zero-mean dipole added as ``zeta0``; zero gives ``zeta0 = 0``.

    Returns
    -------
    omega0, zeta0 : ndarray
    """
    if name == "zero":
        omega = np.zeros((grid.n, grid.n))
    elif name == "uniform_patch":
        omega = uniform_patch(grid, c, radius, center)
    elif name == "gaussian":
        omega = gaussian(grid, sigma, center, amplitude=c)
    elif name == "mollified_ring":
        omega = c * mollified_ring(grid, radius, sigma, center)
    else:
        raise ValueError(f"unknown initial preset {name!r}; expected one of {INITIAL_PRESETS}")
    if normalize and name != "zero":
        total = grid.integrate(omega)
        if total <= 0:
            raise ValueError("cannot normalize an initial density with zero mass")
        omega = omega / total
    omega = np.maximum(omega, 0.0)

    zeta = np.zeros_like(omega)
    if zeta_amplitude != 0.0:
        ex, ey = _periodic_offsets(grid, _center(grid, center))
        s = sigma if name in ("gaussian", "zero") else max(radius, sigma)
        zeta = zeta_amplitude * (ex / s) * gaussian(grid, s, center)
    return omega, zeta


def cosine_potential(grid: Grid2D, amplitude: float) -> np.ndarray:
    """``amplitude * cos(2 pi x / l) * cos(2 pi y / l)``."""
    x, y = grid.coords
    k = 2.0 * np.pi / grid.l
    return amplitude * np.cos(k * x) * np.cos(k * y)


def random_potential(grid: Grid2D, amplitude: float, seed: int = 0, kmax: int = 3) -> np.ndarray:
    """Smooth random trigonometric polynomial with ``max|h| = amplitude``.

    Only the modes with integer wavenumbers ``|k| <= kmax`` are populated, so
    the field is identical (up to sampling) on every grid size.
    """
    rng = np.random.default_rng(seed)
    x, y = grid.coords
    k0 = 2.0 * np.pi / grid.l
    h = np.zeros_like(x)
    for p in range(-kmax, kmax + 1):
        for q in range(0, kmax + 1):
            if (q == 0 and p <= 0) or p * p + q * q > kmax * kmax:
                continue
            amp = rng.standard_normal(2) / (1.0 + p * p + q * q)
            phase = k0 * (p * x + q * y)
            h += amp[0] * np.cos(phase) + amp[1] * np.sin(phase)
    peak = np.max(np.abs(h))
    return h * (amplitude / peak) if peak > 0 else h


def preset_forcing(
    grid: Grid2D, name: str, amplitude: float = 0.0, pin: PinningProfile | None = None
) -> np.ndarray:
    """Forcing field for a named scenario.

    ``current`` combines a uniform applied current with the pinning drift,
    ``perp((A, 0)) - perp(grad h)``.
    """
    n = grid.n
    x, y = grid.coords
    k = 2.0 * np.pi / grid.l
    if name == "none":
        return np.zeros((2, n, n))
    if name == "uniform":
        return np.stack([np.full((n, n), amplitude), np.zeros((n, n))])
    if name == "cosine":
        return amplitude * np.stack([-np.sin(k * y), np.sin(k * x)])
    if name == "current":
        applied = perp(np.stack([np.full((n, n), amplitude), np.zeros((n, n))]))
        if pin is None:
            return applied
        return applied - perp(pin.grad_h)
    raise ValueError(f"unknown forcing preset {name!r}; expected one of {FORCING_PRESETS}")


def smooth_random_field(grid: Grid2D, rng: np.random.Generator, kmax: int = 4) -> np.ndarray:
    """Band-limited random scalar field with unit-scale coefficients."""
    n = grid.n
    coef = np.zeros((n, n // 2 + 1), dtype=complex)
    kx = np.fft.fftfreq(n, 1.0 / n)[:, None]
    ky = np.arange(n // 2 + 1)[None, :]
    band = (kx**2 + ky**2 <= kmax**2) & ~((kx == 0) & (ky == 0))
    m = int(band.sum())
    coef[band] = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) * n * n / np.sqrt(m)
    return grid.ifft(coef)
