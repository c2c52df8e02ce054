"""Periodic grid, spectral calculus and the data containers shared by all solvers.

Scalar fields are ``(n, n)`` float arrays and vector fields are ``(2, n, n)``
arrays; axis 0 is the x direction, so node ``(i, j)`` sits at
``(i * dx, j * dx)``.  All derivatives are Fourier-collocation derivatives
with the Nyquist mode of first derivatives set to zero, which makes the
discrete gradient exactly skew-adjoint.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

_WORKERS = -1
H_MAX = 500.0


@dataclass(frozen=True)
class Grid2D:
    """Uniform ``n x n`` periodic discretization of a square box of side ``l``."""

    n: int
    l: float

    def __post_init__(self):
        n = int(self.n)
        if n < 8 or n & (n - 1):
            raise ValueError(f"grid size must be a power of two >= 8, got {self.n}")
        if not (np.isfinite(self.l) and self.l > 0):
            raise ValueError(f"box side must be positive, got {self.l}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "l", float(self.l))

    @property
    def dx(self) -> float:
        return self.l / self.n

    @property
    def cell_area(self) -> float:
        return self.dx * self.dx

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates ``(x, y)`` as two ``(n, n)`` arrays."""
        s = np.arange(self.n) * self.dx
        return np.meshgrid(s, s, indexing="ij")

    @cached_property
    def _k(self):
        n = self.n
        kx = 2.0 * np.pi * sfft.fftfreq(n, d=self.dx)
        ky = 2.0 * np.pi * sfft.rfftfreq(n, d=self.dx)
        kx_full = kx.copy()
        ky_full = ky.copy()
        kx[n // 2] = 0.0
        ky[-1] = 0.0
        return kx[:, None], ky[None, :], kx_full[:, None], ky_full[None, :]

    @property
    def kx(self) -> np.ndarray:
        """First-derivative wavenumbers along x (Nyquist zeroed), shape ``(n, 1)``."""
        return self._k[0]

    @property
    def ky(self) -> np.ndarray:
        """First-derivative wavenumbers along y (Nyquist zeroed), shape ``(1, n//2+1)``."""
        return self._k[1]

    @cached_property
    def k2_derivative(self) -> np.ndarray:
        """Symbol of ``-div grad`` built from the first-derivative wavenumbers."""
        return self.kx**2 + self.ky**2

    @cached_property
    def k2_full(self) -> np.ndarray:
        """Symbol of ``-Laplacian`` including the Nyquist modes."""
        return self._k[2] ** 2 + self._k[3] ** 2

    @cached_property
    def resolved_mask(self) -> np.ndarray:
        """Fourier modes seen by the spectral gradient.

        Only the mean and the three pure-Nyquist modes are invisible to both
        first derivatives; every other mode is resolved.
        """
        return self.k2_derivative > 0

    def fft(self, s: np.ndarray) -> np.ndarray:
        return sfft.rfft2(s, workers=_WORKERS)

    def ifft(self, sh: np.ndarray) -> np.ndarray:
        return sfft.irfft2(sh, s=(self.n, self.n), workers=_WORKERS)

    def integrate(self, s: np.ndarray) -> float:
        """Box integral of a scalar field."""
        return float(np.sum(s) * self.cell_area)

    def mean(self, s: np.ndarray) -> float:
        return float(np.mean(s))


def _check_scalar(grid: Grid2D, s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.shape != (grid.n, grid.n):
        raise ValueError(f"expected scalar field of shape {(grid.n, grid.n)}, got {s.shape}")
    return s


def _check_vector(grid: Grid2D, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (2, grid.n, grid.n):
        raise ValueError(f"expected vector field of shape {(2, grid.n, grid.n)}, got {v.shape}")
    return v


def ddx(grid: Grid2D, s: np.ndarray) -> np.ndarray:
    return grid.ifft(1j * grid.kx * grid.fft(s))


def ddy(grid: Grid2D, s: np.ndarray) -> np.ndarray:
    return grid.ifft(1j * grid.ky * grid.fft(s))


def grad(grid: Grid2D, s: np.ndarray) -> np.ndarray:
    """Spectral gradient of a scalar field."""
    sh = grid.fft(_check_scalar(grid, s))
    return np.stack([grid.ifft(1j * grid.kx * sh), grid.ifft(1j * grid.ky * sh)])


def div(grid: Grid2D, v: np.ndarray) -> np.ndarray:
    """Spectral divergence ``d1 v1 + d2 v2``."""
    v = _check_vector(grid, v)
    return grid.ifft(1j * grid.kx * grid.fft(v[0]) + 1j * grid.ky * grid.fft(v[1]))


def curl(grid: Grid2D, v: np.ndarray) -> np.ndarray:
    """Spectral scalar curl ``d1 v2 - d2 v1``."""
    v = _check_vector(grid, v)
    return grid.ifft(1j * grid.kx * grid.fft(v[1]) - 1j * grid.ky * grid.fft(v[0]))


def perp(v: np.ndarray) -> np.ndarray:
    """Rotation by pi/2: ``(v1, v2) -> (-v2, v1)``."""
    v = np.asarray(v)
    return np.stack([-v[1], v[0]])


def laplacian(grid: Grid2D, s: np.ndarray) -> np.ndarray:
    return grid.ifft(-grid.k2_full * grid.fft(s))


def project_resolved(grid: Grid2D, s: np.ndarray) -> np.ndarray:
    """Remove the components of ``s`` in the kernel of the spectral gradient."""
    return grid.ifft(np.where(grid.resolved_mask, grid.fft(s), 0.0))


def dot(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Pointwise Euclidean product of two vector fields."""
    return u[0] * v[0] + u[1] * v[1]


def stress_tensor(v: np.ndarray) -> np.ndarray:
    """Stress-energy tensor ``v (x) v - |v|^2 Id / 2`` as a ``(2, 2, n, n)`` array."""
    half = 0.5 * dot(v, v)
    return np.array(
        [
            [v[0] * v[0] - half, v[0] * v[1]],
            [v[1] * v[0], v[1] * v[1] - half],
        ]
    )


def div_tensor(grid: Grid2D, s: np.ndarray) -> np.ndarray:
    """Row-wise divergence ``(div S)_i = sum_j d_j S_ij``."""
    return np.stack([div(grid, s[0]), div(grid, s[1])])


@dataclass(frozen=True)
class PinningProfile:
    """Pinning potential ``h`` with the weight ``a = exp(h)`` and its helpers."""

    grid: Grid2D
    h: np.ndarray
    a: np.ndarray
    a_inv: np.ndarray
    grad_h: np.ndarray
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def is_flat(self) -> bool:
        return bool(np.all(self.h == self.h.flat[0]))


def make_pinning(grid: Grid2D, h: np.ndarray) -> PinningProfile:
    """Build the pinning profile from samples of ``h``.

    Raises
    ------
    ValueError
        If ``h`` is not finite or ``max|h|`` exceeds 500 (``exp`` would overflow
        in products downstream).
    """
    h = _check_scalar(grid, h).copy()
    if not np.all(np.isfinite(h)):
        raise ValueError("pinning potential must be finite")
    if np.max(np.abs(h)) > H_MAX:
        raise OverflowError(f"pinning amplitude max|h| = {np.max(np.abs(h)):.3g} exceeds {H_MAX}")
    a = np.exp(h)
    a_inv = np.exp(-h)
    return PinningProfile(grid=grid, h=h, a=a, a_inv=a_inv, grad_h=grad(grid, h))


def flat_pinning(grid: Grid2D) -> PinningProfile:
    return make_pinning(grid, np.zeros((grid.n, grid.n)))


class Regime(enum.Enum):
    INCOMPRESSIBLE = "incompressible"
    COMPRESSIBLE = "compressible"
    DEGENERATE_PARABOLIC = "degenerate_parabolic"


@dataclass(frozen=True)
class ModelParams:
    """Model coefficients.

    ``lam`` is ignored in the incompressible regime (it plays the role of an
    infinite mobility there).  The degenerate parabolic regime requires
    ``lam == 0`` and ``beta == 0``.
    """

    alpha: float
    beta: float = 0.0
    lam: float = 0.0
    regime: Regime = Regime.INCOMPRESSIBLE

    def __post_init__(self):
        regime = Regime(self.regime)
        object.__setattr__(self, "regime", regime)
        for name in ("alpha", "beta", "lam"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if regime is Regime.DEGENERATE_PARABOLIC:
            if self.lam != 0 or self.beta != 0:
                raise ValueError("degenerate parabolic regime requires lambda = beta = 0")
            if self.alpha <= 0:
                raise ValueError("degenerate parabolic regime requires alpha > 0")

    @property
    def compressible(self) -> bool:
        return self.regime is not Regime.INCOMPRESSIBLE

    @property
    def parabolic(self) -> bool:
        return self.alpha > 0 and self.beta == 0


@dataclass
class State:
    """Time ``t`` with vorticity density, weighted divergence and velocity.

    ``harmonic`` holds the coefficients of the curl-free, ``div(a .)``-free
    component of ``v`` that the torus admits on top of the reconstruction
    from ``(omega, zeta)``.
    """

    t: float
    omega: np.ndarray
    zeta: np.ndarray
    v: np.ndarray
    harmonic: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def copy(self) -> "State":
        return State(
            self.t, self.omega.copy(), self.zeta.copy(), self.v.copy(), self.harmonic.copy()
        )
