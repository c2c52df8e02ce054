"""Explicit solver for the degenerate parabolic regime (no mobility, no Hall term).

In this regime the velocity keeps its direction: ``Psi + v^t = kappa^t (Psi + v0)``
for a scalar factor ``kappa^t(x)`` in ``[0, 1]``.  The factor is computed
node by node from the characteristics of ``W = (Psi + v0)^perp``:

* the curve ``psi_x^s`` solves ``d_s psi = -W(psi)``, ``psi_x^0 = x``;
* along it ``F(s) = int_0^s (f + g)`` and ``G(s) = int_0^s f e^F``, with
  ``f = curl v0`` and ``g = curl Psi``;
* the sigma-flow ``d_t sigma = Z(sigma, sigma0)`` with
  ``Z = max(0, 1 - e^{-F(sigma)} (G(sigma) - G(sigma0)))`` starts at ``sigma0``;
* if ``sigma* = (sigma^t)^{-1}(0)`` then ``kappa^t(x) = 1 + G(sigma*)``.

Everything is vectorized over batches of nodes.  ``F`` and ``G`` are
integrated together with the curve by RK4 and evaluated between samples by
cubic Hermite interpolation, using their known derivatives at the samples.

On the torus the density is ``omega = curl v + background``; the constant
background enters ``f`` and ``g`` with opposite signs, leaving ``f + g``
unchanged.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import ndimage

from .errors import BracketFailure, OutOfRange
from .fields import Grid2D, curl, perp

F_NEG_TOL = 1e-4
BISECTION_TOL = 1e-10


class Interpolation(enum.Enum):
    BICUBIC = "bicubic"
    BILINEAR = "bilinear"


@dataclass(frozen=True)
class DegenerateNumerics:
    """Discretization controls.

    ``ds=None`` picks ``min(0.1 / (1 + max|W|), 0.1 / (1 + max f + max|g|))``.
    Nodes are processed in batches of ``chunk`` to bound memory.
    """

    ds: float | None = None
    interpolation: Interpolation = Interpolation.BICUBIC
    chunk: int = 32768

    def __post_init__(self):
        object.__setattr__(self, "interpolation", Interpolation(self.interpolation))
        if self.ds is not None and not self.ds > 0:
            raise ValueError("ds must be positive")
        if self.chunk < 1:
            raise ValueError("chunk must be positive")


class _Sampler:
    """Periodic interpolation of a grid field at arbitrary points."""

    def __init__(self, grid: Grid2D, data: np.ndarray, interpolation: Interpolation):
        self.grid = grid
        self.order = 3 if interpolation is Interpolation.BICUBIC else 1
        data = np.asarray(data, dtype=float)
        if self.order == 3:
            data = ndimage.spline_filter(data, order=3, mode="grid-wrap")
        self.coef = data

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        idx = pts / self.grid.dx
        flat = idx.reshape(2, -1)
        out = ndimage.map_coordinates(
            self.coef, flat, order=self.order, mode="grid-wrap", prefilter=False
        )
        return out.reshape(pts.shape[1:])


@dataclass
class DegenerateSetup:
    """Coefficient fields of the characteristic construction."""

    grid: Grid2D
    W: np.ndarray
    f: np.ndarray
    g: np.ndarray
    interpolation: Interpolation = Interpolation.BICUBIC

    def __post_init__(self):
        # Spectral reconstruction leaves noise of relative size well below
        # F_NEG_TOL in curl v0; it is clipped so that f >= 0 holds exactly.
        fmin = float(np.min(self.f))
        scale = max(1.0, float(np.max(np.abs(self.f))))
        if fmin < -F_NEG_TOL * scale:
            raise ValueError(f"curl of the initial velocity must be nonnegative (min {fmin:.3e})")
        self.f = np.maximum(self.f, 0.0)
        self.interpolation = Interpolation(self.interpolation)
        self._w = [_Sampler(self.grid, self.W[k], self.interpolation) for k in range(2)]
        self._f = _Sampler(self.grid, self.f, self.interpolation)
        self._g = _Sampler(self.grid, self.g, self.interpolation)

    @classmethod
    def from_fields(
        cls,
        v0: np.ndarray,
        psi_force: np.ndarray,
        grid: Grid2D,
        background: float = 0.0,
        interpolation=Interpolation.BICUBIC,
    ) -> "DegenerateSetup":
        W = perp(psi_force + v0)
        f = curl(grid, v0) + background
        g = curl(grid, psi_force) - background
        return cls(grid, W, f, g, Interpolation(interpolation))

    def velocity(self, pts):
        return np.stack([self._w[0](pts), self._w[1](pts)])

    def f_at(self, pts):
        # Interpolation overshoot must not create negative densities.
        return np.maximum(self._f(pts), 0.0)

    def g_at(self, pts):
        return self._g(pts)

    @property
    def w_max(self) -> float:
        return float(np.max(np.hypot(self.W[0], self.W[1])))

    @property
    def rate_scale(self) -> float:
        return 1.0 + float(np.max(self.f)) + float(np.max(np.abs(self.g)))

    def default_ds(self) -> float:
        return min(0.1 / (1.0 + self.w_max), 0.1 / self.rate_scale)


@dataclass
class CharCurve:
    """Samples of characteristic curves anchored at a batch of points.

    Arrays carry the batch index first: ``points`` has shape ``(2, m, K)``,
    the other samples ``(m, K)``, and ``s_samples`` ``(K,)`` runs from ``-S``
    to ``S`` in steps ``ds``.
    """

    x: np.ndarray
    s_samples: np.ndarray
    ds: float
    points: np.ndarray
    f_samples: np.ndarray
    g_samples: np.ndarray
    F: np.ndarray
    G: np.ndarray

    @property
    def horizon(self) -> float:
        return float(self.s_samples[-1])

    def _locate(self, s: np.ndarray):
        s = np.asarray(s, dtype=float)
        S = self.horizon
        if np.any(s < -S - 1e-12) or np.any(s > S + 1e-12):
            raise OutOfRange(
                f"curve parameter outside the sampled range [-{S:.6g}, {S:.6g}]"
            )
        u = (np.clip(s, -S, S) + S) / self.ds
        k = np.minimum(np.floor(u).astype(np.intp), len(self.s_samples) - 2)
        return k, u - k

    def _hermite(self, values, slopes, k, theta):
        m = values.shape[0]
        idx = k.reshape(m, -1)

        def take(a, j):
            return np.take_along_axis(a, j, axis=1).reshape(k.shape)

        y0, y1 = take(values, idx), take(values, idx + 1)
        d0, d1 = take(slopes, idx), take(slopes, idx + 1)
        t2 = theta * theta
        t3 = t2 * theta
        h00 = 2 * t3 - 3 * t2 + 1
        h10 = t3 - 2 * t2 + theta
        h01 = -2 * t3 + 3 * t2
        h11 = t3 - t2
        return h00 * y0 + h01 * y1 + self.ds * (h10 * d0 + h11 * d1)

    @cached_property
    def _F_slopes(self):
        return self.f_samples + self.g_samples

    @cached_property
    def _G_slopes(self):
        return self.f_samples * np.exp(self.F)

    def F_at(self, s):
        k, theta = self._locate(s)
        return self._hermite(self.F, self._F_slopes, k, theta)

    def G_at(self, s):
        k, theta = self._locate(s)
        return self._hermite(self.G, self._G_slopes, k, theta)

    def Z(self, sigma, sigma0):
        """Rate of the sigma-flow at ``sigma`` for the curve started at ``sigma0``."""
        k, theta = self._locate(sigma)
        F = self._hermite(self.F, self._F_slopes, k, theta)
        G = self._hermite(self.G, self._G_slopes, k, theta)
        return np.maximum(0.0, 1.0 - np.exp(-F) * (G - self.G_at(sigma0)))


def characteristic_flow(x: np.ndarray, S: float, ds: float, setup: DegenerateSetup) -> CharCurve:
    """Integrate ``d_s psi = -W(psi)`` from ``psi^0 = x`` over ``s in [-S, S]``.

    Parameters
    ----------
    x : ndarray, shape (2,) or (2, m)
        Anchor points.
    S : float
        Horizon; it is rounded up to a whole number of steps ``ds``.
    ds : float
        RK4 step in the curve parameter.
    setup : DegenerateSetup

    Returns
    -------
    CharCurve
    """
    if not ds > 0:
        raise ValueError("ds must be positive")
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    m = x.shape[1]
    M = max(1, math.ceil(S / ds - 1e-9))
    K = 2 * M + 1
    s = (np.arange(K) - M) * ds
    points = np.empty((2, m, K))
    F = np.empty((m, K))
    G = np.empty((m, K))
    fs = np.empty((m, K))
    gs = np.empty((m, K))

    def rhs(p, Fv):
        fv = setup.f_at(p)
        gv = setup.g_at(p)
        return -setup.velocity(p), fv + gv, fv * np.exp(Fv), fv, gv

    points[:, :, M] = x
    F[:, M] = 0.0
    G[:, M] = 0.0
    _, _, _, fs[:, M], gs[:, M] = rhs(x, np.zeros(m))
    for direction in (1, -1):
        h = direction * ds
        p, Fv, Gv = x.copy(), np.zeros(m), np.zeros(m)
        for step in range(1, M + 1):
            k1 = rhs(p, Fv)
            k2 = rhs(p + 0.5 * h * k1[0], Fv + 0.5 * h * k1[1])
            k3 = rhs(p + 0.5 * h * k2[0], Fv + 0.5 * h * k2[1])
            k4 = rhs(p + h * k3[0], Fv + h * k3[1])
            p = p + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            Fv = Fv + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            Gv = Gv + h / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
            j = M + direction * step
            points[:, :, j] = p
            F[:, j] = Fv
            G[:, j] = Gv
            fs[:, j] = setup.f_at(p)
            gs[:, j] = setup.g_at(p)
    return CharCurve(x, s, ds, points, fs, gs, F, G)


def _time_steps(curve: CharCurve, t: float, dt_scale: float) -> int:
    rate = 1.0 + float(np.max(curve.f_samples)) + float(np.max(np.abs(curve.g_samples)))
    return max(4, math.ceil(t * rate / dt_scale))


def sigma_forward(curve: CharCurve, t: float, sigma0, nt: int | None = None, dt_scale: float = 0.02):
    """Solve ``d_t sigma = Z(sigma, sigma0)`` from ``sigma(0) = sigma0`` up to ``t`` by RK4.

    The default number of steps makes ``h * (1 + max f + max|g|)`` about
    ``dt_scale``.

    Raises
    ------
    OutOfRange
        If ``[sigma0, sigma0 + t]`` leaves the sampled range of the curve.
    """
    m = curve.F.shape[0]
    sigma0 = np.broadcast_to(np.asarray(sigma0, dtype=float), (m,)).copy()
    if t == 0:
        return sigma0
    S = curve.horizon
    if np.any(sigma0 < -S - 1e-12) or np.any(sigma0 + t > S + 1e-12):
        raise OutOfRange(f"sigma window [sigma0, sigma0 + {t}] exceeds the curve horizon {S}")
    if nt is None:
        nt = _time_steps(curve, t, dt_scale)
    h = t / nt
    G0 = curve.G_at(sigma0)
    S_hi = S

    def Z(sig):
        sig = np.minimum(sig, S_hi)
        k, theta = curve._locate(sig)
        F = curve._hermite(curve.F, curve._F_slopes, k, theta)
        G = curve._hermite(curve.G, curve._G_slopes, k, theta)
        return np.maximum(0.0, 1.0 - np.exp(-F) * (G - G0))

    sig = sigma0.copy()
    for _ in range(nt):
        k1 = Z(sig)
        k2 = Z(sig + 0.5 * h * k1)
        k3 = Z(sig + 0.5 * h * k2)
        k4 = Z(sig + h * k3)
        sig = sig + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return sig


_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(8)


def time_to_reach(curve: CharCurve, sigma0, target: float = 0.0, panels: int | None = None):
    """Time the sigma-flow started at ``sigma0`` needs to reach ``target``.

    Because the flow is autonomous once ``sigma0`` is fixed, this is the
    quadrature ``int_{sigma0}^{target} dsigma / Z(sigma, sigma0)`` (composite
    8-point Gauss-Legendre, panels of about four curve samples).  It is
    ``inf`` where the flow stalls (``Z = 0``) before reaching ``target``.
    """
    m = curve.F.shape[0]
    sigma0 = np.broadcast_to(np.asarray(sigma0, dtype=float), (m,))
    length = target - sigma0
    if panels is None:
        panels = max(1, math.ceil(float(np.max(np.abs(length))) / (4.0 * curve.ds)))
    # Reference nodes on [0, 1].
    edges = np.arange(panels)[:, None]
    ref = ((edges + 0.5 * (_GAUSS_NODES[None, :] + 1.0)) / panels).ravel()
    wts = np.tile(0.5 * _GAUSS_WEIGHTS, panels) / panels
    sig = sigma0[:, None] + length[:, None] * ref[None, :]
    k, theta = curve._locate(sig)
    F = curve._hermite(curve.F, curve._F_slopes, k, theta)
    G = curve._hermite(curve.G, curve._G_slopes, k, theta)
    G0 = curve.G_at(sigma0)
    Z = 1.0 - np.exp(-F) * (G - G0[:, None])
    with np.errstate(divide="ignore"):
        inv = np.where(Z > 0, 1.0 / np.where(Z > 0, Z, 1.0), np.inf)
    return length * (inv @ wts)


def invert_sigma(curve: CharCurve, t: float, tol: float = BISECTION_TOL):
    """``(sigma^t)^{-1}(0)`` by bisection on ``[-t, 0]``.

    The root ``sigma0`` of ``sigma^t(sigma0) = 0`` is equivalently the root of
    ``time_to_reach(sigma0) = t``; the latter is a decreasing function of
    ``sigma0`` that is cheap to evaluate by quadrature, so the bisection runs
    on it.

    Raises
    ------
    BracketFailure
        If the end points do not bracket the root within the tolerance.
    """
    m = curve.F.shape[0]
    if t < 0:
        raise ValueError("time must be nonnegative")
    if t == 0:
        return np.zeros(m)
    lo = np.full(m, -t)
    hi = np.zeros(m)
    panels = max(1, math.ceil(t / (4.0 * curve.ds)))
    # sigma^t(-t) <= 0 means the flow from -t needs at least t to reach 0.
    if np.any(time_to_reach(curve, lo, 0.0, panels) < t * (1.0 - 1e-6)):
        raise BracketFailure("sigma-flow started at -t overshoots zero")
    while np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        late = time_to_reach(curve, mid, 0.0, panels) > t
        lo = np.where(late, mid, lo)
        hi = np.where(late, hi, mid)
    return 0.5 * (lo + hi)


def kappa_at(curve: CharCurve, t: float):
    """``kappa^t = 1 - int_{sigma*}^0 f e^F``, clipped to ``[0, 1]``."""
    if t == 0:
        return np.ones(curve.F.shape[0])
    star = invert_sigma(curve, t)
    return np.clip(1.0 + curve.G_at(star), 0.0, 1.0)


def degenerate_kappa(
    setup: DegenerateSetup, t: float, numerics: DegenerateNumerics = DegenerateNumerics()
) -> np.ndarray:
    """``kappa^t`` at every grid node."""
    grid = setup.grid
    n = grid.n
    if t == 0:
        return np.ones((n, n))
    ds = numerics.ds if numerics.ds is not None else setup.default_ds()
    S = t + 2 * ds
    X, Y = grid.coords
    nodes = np.stack([X.ravel(), Y.ravel()])
    kappa = np.empty(n * n)
    for start in range(0, n * n, numerics.chunk):
        sl = slice(start, min(start + numerics.chunk, n * n))
        curve = characteristic_flow(nodes[:, sl], S, ds, setup)
        kappa[sl] = kappa_at(curve, t)
    return kappa.reshape(n, n)


def degenerate_solution(
    v0: np.ndarray,
    psi_force: np.ndarray,
    grid: Grid2D,
    t: float,
    numerics: DegenerateNumerics = DegenerateNumerics(),
    background: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Velocity ``v^t = -Psi + kappa^t (Psi + v0)`` and the factor ``kappa^t``.

    Parameters
    ----------
    v0, psi_force : ndarray, shape (2, n, n)
    grid : Grid2D
    t : float
    numerics : DegenerateNumerics
    background : float
        Constant added to ``curl v0`` to obtain the density (the mean of
        the density on a torus, zero for data with nonnegative curl).
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    if t == 0:
        return np.array(v0, dtype=float, copy=True), np.ones((grid.n, grid.n))
    setup = DegenerateSetup.from_fields(v0, psi_force, grid, background, numerics.interpolation)
    if not np.any(setup.f):
        return np.array(v0, dtype=float, copy=True), np.ones((grid.n, grid.n))
    kappa = degenerate_kappa(setup, t, numerics)
    return -psi_force + kappa * (psi_force + v0), kappa


def degenerate_vorticity(v: np.ndarray, grid: Grid2D, background: float = 0.0) -> np.ndarray:
    """Density ``curl v + background`` of a degenerate solution."""
    return curl(grid, v) + background
