"""Weighted elliptic solves and the velocity and pressure reconstructions.

The central kernel solves ``-div(b grad u) = f - mean(f)`` on the torus by
preconditioned conjugate gradients.  The preconditioner is the exact inverse
of the constant-coefficient operator ``-mean(b) * Laplacian`` built from the
same derivative symbols as the operator, so a constant ``b`` converges in a
single iteration.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import NonConvergence
from .fields import Grid2D, PinningProfile, curl, div, dot, grad, perp


class Preconditioner(enum.Enum):
    SPECTRAL_LAPLACIAN = "spectral_laplacian"


@dataclass(frozen=True)
class EllipticOptions:
    """Stopping rule for the conjugate-gradient solves.

    ``max_iter=None`` means ``10 * n`` for the grid at hand.
    """

    tol: float = 1e-10
    max_iter: int | None = None
    precond: Preconditioner = Preconditioner.SPECTRAL_LAPLACIAN

    def __post_init__(self):
        if not 0 < self.tol < 1:
            raise ValueError(f"elliptic tolerance must lie in (0, 1), got {self.tol}")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")

    def cap(self, grid: Grid2D) -> int:
        return self.max_iter if self.max_iter is not None else 10 * grid.n


@dataclass(frozen=True)
class EllipticReport:
    iters: int
    residual: float
    mean_removed: float


def apply_operator(grid: Grid2D, b: np.ndarray, u: np.ndarray) -> np.ndarray:
    """``-div(b grad u)`` with spectral derivatives."""
    return -div(grid, b * grad(grid, u))


def _project(grid: Grid2D, s: np.ndarray) -> np.ndarray:
    sh = grid.fft(s)
    sh[~grid.resolved_mask] = 0.0
    return grid.ifft(sh)


def solve_div_b_grad(
    grid: Grid2D,
    b: np.ndarray,
    f: np.ndarray,
    opts: EllipticOptions = EllipticOptions(),
    x0: np.ndarray | None = None,
) -> tuple[np.ndarray, EllipticReport]:
    """Zero-mean solution of ``-div(b grad u) = f - mean(f)``.

    Parameters
    ----------
    grid : Grid2D
    b : ndarray
        Positive coefficient.
    f : ndarray
        Right-hand side; its mean is removed before solving.
    opts : EllipticOptions
    x0 : ndarray, optional
        Initial guess (for example the previous time step's solution).

    Returns
    -------
    u : ndarray
    report : EllipticReport

    Raises
    ------
    NonConvergence
        When the relative residual is still above ``opts.tol`` after the
        iteration cap.
    """
    b = np.asarray(b, dtype=float)
    f = np.asarray(f, dtype=float)
    if np.min(b) <= 0:
        raise ValueError("elliptic coefficient must be positive")
    if not np.all(np.isfinite(f)):
        raise ValueError("right-hand side must be finite")
    mean_f = float(np.mean(f))
    rhs = _project(grid, f)
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0 or rhs_norm <= 1e-300:
        return np.zeros_like(f), EllipticReport(0, 0.0, mean_f)

    inv_symbol = np.zeros_like(grid.k2_derivative)
    mask = grid.resolved_mask
    inv_symbol[mask] = 1.0 / (float(np.mean(b)) * grid.k2_derivative[mask])

    def op(u):
        return _project(grid, apply_operator(grid, b, u))

    def precond(r):
        return grid.ifft(inv_symbol * grid.fft(r))

    if x0 is None:
        x = np.zeros_like(f)
        r = rhs.copy()
    else:
        x = _project(grid, x0)
        r = rhs - op(x)
    cap = opts.cap(grid)
    target = opts.tol * rhs_norm
    res = float(np.linalg.norm(r))
    it = 0
    if res > target:
        z = precond(r)
        p = z.copy()
        rz = float(np.vdot(r, z))
        while it < cap:
            it += 1
            ap = op(p)
            step = rz / float(np.vdot(p, ap))
            x += step * p
            r -= step * ap
            res = float(np.linalg.norm(r))
            if res <= target:
                # Guard against drift of the recursive residual.
                r = rhs - op(x)
                res = float(np.linalg.norm(r))
                if res <= target:
                    break
            z = precond(r)
            rz_new = float(np.vdot(r, z))
            p = z + (rz_new / rz) * p
            rz = rz_new
    rel = res / rhs_norm
    if rel > opts.tol:
        raise NonConvergence(
            f"CG stopped after {it} iterations at relative residual {rel:.3e} > {opts.tol:.1e}",
            iters=it,
            residual=rel,
        )
    return x, EllipticReport(it, rel, mean_f)


@dataclass(frozen=True)
class HarmonicBasis:
    """Curl-free fields ``H_k = e_k + grad chi_k`` with ``div(a H_k) = 0``."""

    fields: np.ndarray
    gram: np.ndarray

    def coefficients(self, a: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Weighted least-squares coordinates of ``v`` on the basis."""
        rhs = np.array([np.mean(a * dot(v, h)) for h in self.fields])
        return np.linalg.solve(self.gram, rhs)

    def combine(self, coef) -> np.ndarray:
        return coef[0] * self.fields[0] + coef[1] * self.fields[1]


def harmonic_basis(pin: PinningProfile, opts: EllipticOptions = EllipticOptions()) -> HarmonicBasis:
    """Basis of the two-dimensional space of weighted harmonic fields (cached)."""
    key = ("harmonic", opts.tol)
    if key in pin.cache:
        return pin.cache[key]
    grid = pin.grid
    n = grid.n
    da = grad(grid, pin.a)
    fields = np.zeros((2, 2, n, n))
    for k in range(2):
        chi, _ = solve_div_b_grad(grid, pin.a, da[k], opts)
        fields[k] = grad(grid, chi)
        fields[k, k] += 1.0
    gram = np.array([[np.mean(pin.a * dot(fields[i], fields[j])) for j in range(2)] for i in range(2)])
    basis = HarmonicBasis(fields, gram)
    pin.cache[key] = basis
    return basis


@dataclass(frozen=True)
class ReconstructionReport:
    stream: EllipticReport
    potential: EllipticReport
    psi: np.ndarray
    phi: np.ndarray


def reconstruct_velocity(
    omega: np.ndarray,
    zeta: np.ndarray,
    pin: PinningProfile,
    opts: EllipticOptions = EllipticOptions(),
    guess: ReconstructionReport | None = None,
) -> tuple[np.ndarray, ReconstructionReport]:
    """Velocity with prescribed curl and weighted divergence.

    Returns ``v = a^{-1} perp(grad psi) + grad phi`` where
    ``-div(a^{-1} grad psi) = -(omega - mean)`` and
    ``-div(a grad phi) = -(zeta - mean)``, so that ``curl v`` and
    ``div(a v)`` reproduce the mean-free parts of the inputs.
    """
    grid = pin.grid
    x_psi = guess.psi if guess is not None else None
    x_phi = guess.phi if guess is not None else None
    psi, rep_s = solve_div_b_grad(grid, pin.a_inv, -omega, opts, x0=x_psi)
    v = pin.a_inv * perp(grad(grid, psi))
    if np.any(zeta):
        phi, rep_p = solve_div_b_grad(grid, pin.a, -zeta, opts, x0=x_phi)
        v = v + grad(grid, phi)
    else:
        phi = np.zeros_like(zeta)
        rep_p = EllipticReport(0, 0.0, 0.0)
    return v, ReconstructionReport(rep_s, rep_p, psi, phi)


def flux_field(v: np.ndarray, psi_force: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    """``-alpha (Psi + v) + beta (Psi + v)^perp``: the velocity tendency per unit vorticity."""
    u = psi_force + v
    return -alpha * u + beta * perp(u)


def pressure(
    omega: np.ndarray,
    v: np.ndarray,
    pin: PinningProfile,
    psi_force: np.ndarray,
    alpha: float,
    beta: float,
    opts: EllipticOptions = EllipticOptions(),
) -> tuple[np.ndarray, EllipticReport]:
    """Zero-mean pressure with ``-div(a grad P) = div(a omega F)``.

    ``F = -alpha (Psi + v) + beta (Psi + v)^perp`` is the vorticity-weighted
    tendency of the velocity; ``P`` is the Lagrange multiplier that keeps
    ``div(a v)`` fixed under that tendency.
    """
    grid = pin.grid
    src = div(grid, pin.a * omega * flux_field(v, psi_force, alpha, beta))
    return solve_div_b_grad(grid, pin.a, src, opts)


def weighted_divergence(pin: PinningProfile, v: np.ndarray) -> np.ndarray:
    return div(pin.grid, pin.a * v)


def vorticity_of(pin: PinningProfile, v: np.ndarray) -> np.ndarray:
    return curl(pin.grid, v)
