"""Time integration of the vorticity formulation.

The evolved unknowns are the vortex density ``omega`` (a positive density
transported in conservative form), the weighted divergence ``zeta`` (only in
the compressible regimes) and the two coefficients of the weighted harmonic
part of ``v``.  After every stage the velocity is rebuilt by
:func:`meanvort.elliptic.reconstruct_velocity`.

On the torus a positive density cannot be a curl, so the velocity is
reconstructed from ``omega - mean(omega)``; the constant background is the
usual neutralizing charge and it is kept fixed because the mass is conserved.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .elliptic import (
    EllipticOptions,
    HarmonicBasis,
    ReconstructionReport,
    flux_field,
    harmonic_basis,
    reconstruct_velocity,
)
from .errors import CflViolation, Divergence, MeanvortError
from .fields import Grid2D, ModelParams, PinningProfile, State, div, dot, perp

TOL_POS = 1e-12
POSITIVITY_CFL = 0.5


class Limiter(enum.Enum):
    VAN_LEER = "vanleer"
    MINMOD = "minmod"
    NONE = "none"


class ZetaScheme(enum.Enum):
    IMEX = "imex"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class StepOptions:
    """Time-stepping controls.

    The step is ``dt = min(dt_max, cfl * dx / (max|w_1| + max|w_2|))``; the
    sum of the component maxima is the speed that guarantees positivity of
    the limited scheme for ``cfl <= 0.5``.
    """

    cfl: float = 0.4
    dt_max: float = math.inf
    limiter: Limiter = Limiter.VAN_LEER
    zeta_scheme: ZetaScheme = ZetaScheme.IMEX

    def __post_init__(self):
        if not 0 < self.cfl <= 0.9:
            raise ValueError(f"cfl must lie in (0, 0.9], got {self.cfl}")
        if not self.dt_max > 0:
            raise ValueError("dt_max must be positive")
        object.__setattr__(self, "limiter", Limiter(self.limiter))
        object.__setattr__(self, "zeta_scheme", ZetaScheme(self.zeta_scheme))


@dataclass
class Trajectory:
    """Strided snapshots plus one cheap diagnostic record per step."""

    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    diagnostics_rows: list = field(default_factory=list)

    def add_snapshot(self, state: State) -> None:
        if self.times and state.t <= self.times[-1]:
            raise ValueError("snapshot times must increase strictly")
        self.times.append(state.t)
        self.snapshots.append(state.copy())

    @property
    def final(self) -> State:
        return self.snapshots[-1]


@dataclass
class PicardReport:
    iterates: int
    sup_diffs: list


# --------------------------------------------------------------------------
# transport of the vortex density


def transport_velocity(v: np.ndarray, psi_force: np.ndarray, params: ModelParams) -> np.ndarray:
    """Flux velocity ``w = alpha (Psi + v)^perp + beta (Psi + v)``.

    The density obeys ``d_t omega = div(omega w)``, so it is carried by ``-w``.
    """
    u = psi_force + v
    return params.alpha * perp(u) + params.beta * u


def transport_speed(w: np.ndarray) -> float:
    """Sum of the component maxima, the speed entering the step restriction."""
    return float(np.max(np.abs(w[0])) + np.max(np.abs(w[1])))


def _limited_slope(dm: np.ndarray, dp: np.ndarray, limiter: Limiter) -> np.ndarray:
    if limiter is Limiter.NONE:
        return 0.5 * (dm + dp)
    if limiter is Limiter.MINMOD:
        return np.where(dm * dp > 0, np.sign(dm) * np.minimum(np.abs(dm), np.abs(dp)), 0.0)
    prod = dm * dp
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(prod > 0, 2.0 * prod / (dm + dp), 0.0)


def _face_flux(q: np.ndarray, u: np.ndarray, axis: int, limiter: Limiter) -> np.ndarray:
    """Upwind MUSCL flux through the face between cell ``i`` and ``i + 1``."""
    q_next = np.roll(q, -1, axis=axis)
    dm = q - np.roll(q, 1, axis=axis)
    dp = q_next - q
    slope = _limited_slope(dm, dp, limiter)
    left = q + 0.5 * slope
    right = q_next - 0.5 * np.roll(slope, -1, axis=axis)
    u_face = 0.5 * (u + np.roll(u, -1, axis=axis))
    return np.where(u_face > 0, u_face * left, u_face * right)


def vorticity_rate(omega: np.ndarray, w: np.ndarray, grid: Grid2D, limiter: Limiter) -> np.ndarray:
    """Finite-volume approximation of ``div(omega w)``.

    The face fluxes telescope, so the sum of the rate vanishes to rounding.
    """
    rate = np.zeros_like(omega)
    for axis in (0, 1):
        flux = _face_flux(omega, -w[axis], axis, limiter)
        rate -= flux - np.roll(flux, 1, axis=axis)
    return rate / grid.dx


def _check_cfl(w: np.ndarray, dt: float, grid: Grid2D, cfl: float) -> None:
    courant = dt * transport_speed(w) / grid.dx
    if courant > cfl * (1.0 + 1e-9):
        raise CflViolation(f"Courant number {courant:.4g} exceeds the limit {cfl:.4g}")


def step_vorticity(
    omega: np.ndarray,
    w: np.ndarray,
    dt: float,
    grid: Grid2D,
    opts: StepOptions = StepOptions(),
    w_end: np.ndarray | None = None,
) -> np.ndarray:
    """One Heun step of ``d_t omega = div(omega w)``.

    Parameters
    ----------
    omega : ndarray
        Density at the start of the step.
    w : ndarray
        Flux velocity at the start of the step.
    dt : float
    grid : Grid2D
    opts : StepOptions
    w_end : ndarray, optional
        Flux velocity at the end of the step (defaults to ``w``).

    Raises
    ------
    CflViolation
        If ``dt`` exceeds ``opts.cfl * dx / (max|w_1| + max|w_2|)``.
    """
    _check_cfl(w, dt, grid, opts.cfl)
    if w_end is None:
        w_end = w
    else:
        _check_cfl(w_end, dt, grid, max(opts.cfl, POSITIVITY_CFL) * 1.25)
    stage = omega + dt * vorticity_rate(omega, w, grid, opts.limiter)
    return 0.5 * omega + 0.5 * (stage + dt * vorticity_rate(stage, w_end, grid, opts.limiter))


# --------------------------------------------------------------------------
# weighted divergence


def zeta_source(
    omega: np.ndarray, v: np.ndarray, pin: PinningProfile, psi_force: np.ndarray, params: ModelParams
) -> np.ndarray:
    """``div(a omega F)`` with ``F = -alpha (Psi + v) + beta (Psi + v)^perp``."""
    if params.alpha == 0 and params.beta == 0:
        return np.zeros_like(omega)
    return div(pin.grid, pin.a * omega * flux_field(v, psi_force, params.alpha, params.beta))


def _zeta_explicit_part(zeta, source, pin, params):
    if params.lam == 0:
        return source
    return source - params.lam * div(pin.grid, zeta * pin.grad_h)


def _diffusion_factor(grid: Grid2D, lam: float, dt: float) -> np.ndarray:
    return np.exp(-lam * grid.k2_full * dt)


def step_zeta(
    zeta: np.ndarray,
    omega: np.ndarray,
    v: np.ndarray,
    pin: PinningProfile,
    psi_force: np.ndarray,
    params: ModelParams,
    dt: float,
    opts: StepOptions = StepOptions(),
    *,
    omega_end: np.ndarray | None = None,
    v_end: np.ndarray | None = None,
    t: float = 0.0,
    extra_source: Callable[[float], np.ndarray] | None = None,
) -> np.ndarray:
    """One step of ``d_t zeta = lam Lap zeta - lam div(zeta grad h) + div(a omega F)``.

    With the IMEX scheme the diffusion is integrated exactly in Fourier space
    (integrating factor) and the drift and source terms by Heun's method; an
    eigenmode of the Laplacian with no forcing is therefore propagated
    exactly.  ``omega_end`` and ``v_end`` give the source at ``t + dt``; when
    omitted the source is frozen at its initial value.  ``extra_source(t)``
    adds a prescribed forcing (used for manufactured solutions).
    """
    grid = pin.grid
    if not params.compressible:
        raise ValueError("the weighted divergence is only evolved in the compressible regimes")
    lam = params.lam
    drift_speed = lam * float(np.max(np.abs(pin.grad_h[0])) + np.max(np.abs(pin.grad_h[1])))
    if drift_speed > 0 and dt * drift_speed / grid.dx > max(opts.cfl, POSITIVITY_CFL) * 1.25:
        raise CflViolation("time step too large for the pinning drift")

    src0 = zeta_source(omega, v, pin, psi_force, params)
    if omega_end is None and v_end is None:
        src1 = src0
    else:
        src1 = zeta_source(
            omega if omega_end is None else omega_end,
            v if v_end is None else v_end,
            pin,
            psi_force,
            params,
        )
    if extra_source is not None:
        src0 = src0 + extra_source(t)
        src1 = src1 + extra_source(t + dt)

    if opts.zeta_scheme is ZetaScheme.EXPLICIT or lam == 0:
        if lam > 0 and dt * lam * float(np.max(grid.k2_full)) > 2.0:
            raise CflViolation("explicit diffusion step exceeds its stability limit")

        def rate(z, src):
            out = _zeta_explicit_part(z, src, pin, params)
            if lam > 0:
                out = out + grid.ifft(-lam * grid.k2_full * grid.fft(z))
            return out

        k0 = rate(zeta, src0)
        stage = zeta + dt * k0
        return zeta + 0.5 * dt * (k0 + rate(stage, src1))

    decay = _diffusion_factor(grid, lam, dt)
    n0 = _zeta_explicit_part(zeta, src0, pin, params)
    stage = grid.ifft(decay * grid.fft(zeta + dt * n0))
    n1 = _zeta_explicit_part(stage, src1, pin, params)
    return grid.ifft(decay * grid.fft(zeta + 0.5 * dt * n0)) + 0.5 * dt * n1


# --------------------------------------------------------------------------
# coupled step


def harmonic_rate(
    omega: np.ndarray,
    v: np.ndarray,
    pin: PinningProfile,
    psi_force: np.ndarray,
    params: ModelParams,
    basis: HarmonicBasis,
) -> np.ndarray:
    """Time derivative of the weighted-harmonic coefficients of ``v``.

    The gradient and pressure terms of the velocity equation are
    ``a``-orthogonal to the harmonic fields, so only ``omega F`` contributes.
    """
    if params.alpha == 0 and params.beta == 0:
        return np.zeros(2)
    tendency = omega * flux_field(v, psi_force, params.alpha, params.beta)
    rhs = np.array([np.mean(pin.a * dot(tendency, h)) for h in basis.fields])
    return np.linalg.solve(basis.gram, rhs)


def assemble_velocity(
    omega: np.ndarray,
    zeta: np.ndarray,
    harmonic: np.ndarray,
    pin: PinningProfile,
    elliptic_opts: EllipticOptions,
    basis: HarmonicBasis | None = None,
    guess: ReconstructionReport | None = None,
) -> tuple[np.ndarray, ReconstructionReport]:
    v, rep = reconstruct_velocity(omega, zeta, pin, elliptic_opts, guess=guess)
    if np.any(harmonic):
        if basis is None:
            basis = harmonic_basis(pin, elliptic_opts)
        v = v + basis.combine(harmonic)
    return v, rep


def initial_state(
    omega0: np.ndarray,
    zeta0: np.ndarray,
    pin: PinningProfile,
    params: ModelParams,
    elliptic_opts: EllipticOptions = EllipticOptions(),
) -> State:
    """State at ``t = 0`` with the velocity reconstructed from the data."""
    zeta0 = zeta0 if params.compressible else np.zeros_like(omega0)
    v0, _ = reconstruct_velocity(omega0, zeta0, pin, elliptic_opts)
    return State(0.0, np.array(omega0, dtype=float), np.array(zeta0, dtype=float), v0, np.zeros(2))


def advance(
    state: State,
    pin: PinningProfile,
    psi_force: np.ndarray,
    params: ModelParams,
    dt: float,
    opts: StepOptions = StepOptions(),
    elliptic_opts: EllipticOptions = EllipticOptions(),
    _guess: ReconstructionReport | None = None,
) -> State:
    """Advance the coupled system by one Heun step of size ``dt``.

    Raises
    ------
    CflViolation
        If ``dt`` is too large for the current flux velocity.
    NonConvergence
        From the velocity reconstruction.
    """
    grid = pin.grid
    if params.alpha == 0 and params.beta == 0:
        # Nothing moves: the density, the source of zeta and the harmonic
        # tendency all vanish, so only diffusion/drift of zeta remains.
        out = state.copy()
        out.t = state.t + dt
        if params.compressible and params.lam > 0:
            out.zeta = step_zeta(state.zeta, state.omega, state.v, pin, psi_force, params, dt, opts)
            out.v, _ = assemble_velocity(out.omega, out.zeta, out.harmonic, pin, elliptic_opts)
        return out

    basis = harmonic_basis(pin, elliptic_opts)
    w0 = transport_velocity(state.v, psi_force, params)
    _check_cfl(w0, dt, grid, opts.cfl)

    omega_rate0 = vorticity_rate(state.omega, w0, grid, opts.limiter)
    c_rate0 = harmonic_rate(state.omega, state.v, pin, psi_force, params, basis)
    omega1 = state.omega + dt * omega_rate0
    c1 = state.harmonic + dt * c_rate0
    if params.compressible:
        zeta1 = step_zeta(state.zeta, state.omega, state.v, pin, psi_force, params, dt, opts)
    else:
        zeta1 = state.zeta
    v1, rep = assemble_velocity(omega1, zeta1, c1, pin, elliptic_opts, basis, _guess)

    w1 = transport_velocity(v1, psi_force, params)
    omega_new = 0.5 * state.omega + 0.5 * (omega1 + dt * vorticity_rate(omega1, w1, grid, opts.limiter))
    c_new = state.harmonic + 0.5 * dt * (c_rate0 + harmonic_rate(omega1, v1, pin, psi_force, params, basis))
    if params.compressible:
        zeta_new = step_zeta(
            state.zeta, state.omega, state.v, pin, psi_force, params, dt, opts,
            omega_end=omega1, v_end=v1,
        )
    else:
        zeta_new = state.zeta
    v_new, _ = assemble_velocity(omega_new, zeta_new, c_new, pin, elliptic_opts, basis, rep)
    return State(state.t + dt, omega_new, zeta_new, v_new, c_new)


def stable_dt(
    state: State, pin: PinningProfile, psi_force: np.ndarray, params: ModelParams, opts: StepOptions
) -> float:
    """Largest admissible step for the current state (``inf`` if nothing moves)."""
    w = transport_velocity(state.v, psi_force, params)
    speed = transport_speed(w)
    if params.compressible and params.lam > 0:
        speed = max(speed, params.lam * transport_speed(pin.grad_h))
    limit = opts.cfl * pin.grid.dx / speed if speed > 0 else math.inf
    if params.compressible and params.lam > 0 and opts.zeta_scheme is ZetaScheme.EXPLICIT:
        limit = min(limit, 1.9 / (params.lam * float(np.max(pin.grid.k2_full))))
    return min(limit, opts.dt_max)


def step_record(state: State, pin: PinningProfile, dt: float) -> dict:
    """Cheap per-step record kept in :attr:`Trajectory.diagnostics_rows`."""
    grid = pin.grid
    omega = state.omega
    vnorm = float(np.linalg.norm(state.v))
    div_av = div(grid, pin.a * state.v) - state.zeta
    return {
        "t": state.t,
        "dt": dt,
        "mass": grid.integrate(omega),
        "min": float(np.min(omega)),
        "linf": float(np.max(np.abs(omega))),
        "l2": float(np.sqrt(grid.integrate(omega * omega))),
        "div_a_v_rel": float(np.linalg.norm(div_av) / vnorm) if vnorm > 0 else 0.0,
    }


class RunAborted(MeanvortError):
    """A solver error interrupted :func:`run`; the partial trajectory is attached."""

    def __init__(self, cause: Exception, trajectory: Trajectory):
        super().__init__(f"run aborted at t={trajectory.times[-1] if trajectory.times else 0}: {cause}")
        self.cause = cause
        self.trajectory = trajectory


def run(
    state0: State,
    pin: PinningProfile,
    psi_force: np.ndarray,
    params: ModelParams,
    T: float,
    opts: StepOptions = StepOptions(),
    elliptic_opts: EllipticOptions = EllipticOptions(),
    snapshot_stride: int = 1,
    on_snapshot: Callable[[State], None] | None = None,
    record: Callable[[State, PinningProfile, float], dict] = step_record,
) -> Trajectory:
    """Integrate from ``state0`` to time ``T`` with adaptive steps.

    A snapshot is kept every ``snapshot_stride`` steps and at ``T``.
    ``on_snapshot`` is called with each stored state (for streaming output).

    Raises
    ------
    RunAborted
        Wrapping any solver error; ``exc.trajectory`` holds what was computed.
    """
    if T < 0:
        raise ValueError("final time must be nonnegative")
    if snapshot_stride < 1:
        raise ValueError("snapshot stride must be at least 1")
    traj = Trajectory()
    state = state0.copy()

    def keep(s):
        traj.add_snapshot(s)
        if on_snapshot is not None:
            on_snapshot(traj.snapshots[-1])

    keep(state)
    traj.diagnostics_rows.append(record(state, pin, 0.0))
    steps = 0
    try:
        while state.t < T and not math.isclose(state.t, T, rel_tol=0, abs_tol=1e-14 * max(1.0, T)):
            dt = min(stable_dt(state, pin, psi_force, params, opts), T - state.t)
            # Avoid a sliver step at the end.
            if T - state.t - dt < 1e-3 * dt:
                dt = T - state.t
            state = advance(state, pin, psi_force, params, dt, opts, elliptic_opts)
            if T - state.t < 1e-14 * max(1.0, T):
                state.t = T
            steps += 1
            traj.diagnostics_rows.append(record(state, pin, dt))
            if steps % snapshot_stride == 0 or state.t >= T:
                keep(state)
    except MeanvortError as exc:
        raise RunAborted(exc, traj) from exc
    if traj.times[-1] < state.t:
        keep(state)
    return traj


# --------------------------------------------------------------------------
# Picard iteration


def _uniform_steps(state0, pin, psi_force, params, T, opts):
    dt0 = stable_dt(state0, pin, psi_force, params, opts)
    # Leave room for the velocity to grow during the window.
    dt0 = 0.8 * dt0 if math.isfinite(dt0) else T
    steps = max(1, math.ceil(T / dt0)) if T > 0 else 0
    return steps, (T / steps if steps else 0.0)


def picard_local(
    state0: State,
    pin: PinningProfile,
    psi_force: np.ndarray,
    params: ModelParams,
    T: float,
    n_iters: int,
    opts: StepOptions = StepOptions(),
    elliptic_opts: EllipticOptions = EllipticOptions(),
    steps: int | None = None,
) -> tuple[Trajectory, PicardReport]:
    """Fixed-point iteration on ``[0, T]`` with frozen advecting fields.

    Iterate ``n + 1`` transports the density with the velocity of iterate
    ``n``, drives ``zeta`` with the density and velocity of iterate ``n``
    and then rebuilds the velocity.  The zeroth iterate is the initial
    velocity held constant in time.  All iterates share one uniform time
    grid of ``steps`` steps (chosen from the initial step restriction when
    omitted).

    Returns
    -------
    trajectory : Trajectory
        Every time level of the last iterate.
    report : PicardReport
        ``sup_diffs[k] = max_t ||v_{k+1}(t) - v_k(t)||_inf``.

    Raises
    ------
    Divergence
        When the sup differences grow for three consecutive iterates.
    """
    if params.regime.value == "degenerate_parabolic" or (params.compressible and params.lam <= 0):
        raise ValueError("the Picard scheme needs the incompressible regime or lambda > 0")
    if steps is None:
        steps, dt = _uniform_steps(state0, pin, psi_force, params, T, opts)
    else:
        dt = T / steps
    basis = harmonic_basis(pin, elliptic_opts)
    grid = pin.grid

    prev = [state0.copy() for _ in range(steps + 1)]
    for k, s in enumerate(prev):
        s.t = k * dt
    sup_diffs: list[float] = []
    increases = 0
    for _ in range(n_iters):
        cur = [state0.copy()]
        for k in range(steps):
            a0, a1 = prev[k], prev[k + 1]
            s = cur[-1]
            w0 = transport_velocity(a0.v, psi_force, params)
            w1 = transport_velocity(a1.v, psi_force, params)
            omega = step_vorticity(s.omega, w0, dt, grid, opts, w_end=w1)
            if params.compressible:
                zeta = step_zeta(
                    s.zeta, a0.omega, a0.v, pin, psi_force, params, dt, opts,
                    omega_end=a1.omega, v_end=a1.v,
                )
            else:
                zeta = s.zeta
            c = s.harmonic + 0.5 * dt * (
                harmonic_rate(a0.omega, a0.v, pin, psi_force, params, basis)
                + harmonic_rate(a1.omega, a1.v, pin, psi_force, params, basis)
            )
            v, _ = assemble_velocity(omega, zeta, c, pin, elliptic_opts, basis)
            cur.append(State((k + 1) * dt, omega, zeta, v, c))
        diff = max(float(np.max(np.abs(c.v - p.v))) for c, p in zip(cur, prev))
        if sup_diffs and diff > sup_diffs[-1]:
            increases += 1
        else:
            increases = 0
        sup_diffs.append(diff)
        prev = cur
        if increases >= 3:
            raise Divergence(
                f"Picard differences grew for 3 consecutive iterates (last {diff:.3e}); "
                "shorten the time window"
            )
    traj = Trajectory()
    for s in prev:
        traj.add_snapshot(s)
        traj.diagnostics_rows.append(step_record(s, pin, dt))
    return traj, PicardReport(len(sup_diffs), sup_diffs)
