"""Runtime checks of conservation laws, identities and decay bounds.

The functions here are read-only: they take fields or stored trajectories
and return numbers.  Bounds whose constants are explicit are returned as
margins (measured value divided by bound); the smoothing bound with an
unspecified constant is reported through a fitted constant instead.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields as dc_fields

import numpy as np
from scipy.special import lambertw

from .elliptic import (
    EllipticOptions,
    flux_field,
    harmonic_basis,
    pressure,
    solve_div_b_grad,
)
from .errors import InsufficientSnapshots, RegimeMismatch
from .evolution import Trajectory, transport_velocity
from .fields import (
    Grid2D,
    ModelParams,
    PinningProfile,
    State,
    curl,
    div,
    div_tensor,
    dot,
    grad,
    perp,
    stress_tensor,
)

CSV_HEADER = (
    "t",
    "mass",
    "linf",
    "l2",
    "lp",
    "p",
    "div_a_v_rel",
    "delort_res",
    "energy",
    "energy_rhs_res",
    "margin_r44_sharp",
    "margin_r44_univ",
    "fitted_C_112",
)


# --------------------------------------------------------------------------
# norms


def mass(omega: np.ndarray, grid: Grid2D) -> float:
    """Box integral of the density."""
    return grid.integrate(omega)


def lp_norm(omega: np.ndarray, grid: Grid2D, p: float) -> float:
    """``L^p`` norm with cell-area weights; ``p = inf`` gives the grid maximum."""
    if not p >= 1:
        raise ValueError("p must be at least 1")
    a = np.abs(omega)
    if math.isinf(p):
        return float(np.max(a))
    peak = float(np.max(a))
    if peak == 0:
        return 0.0
    # Scale by the peak to keep large exponents finite.
    return peak * float(np.sum((a / peak) ** p) * grid.cell_area) ** (1.0 / p)


# --------------------------------------------------------------------------
# identities


def delort_residual(v: np.ndarray, pin: PinningProfile, zeta: np.ndarray | None = None) -> float:
    """Relative residual of the stress-tensor form of ``curl(v) v``.

    For ``div(a v) = 0`` the identity reads
    ``curl(v) v = -|v|^2 grad^perp(h) / 2 - (a^{-1} div(a S_v))^perp`` with
    ``S_v = v (x) v - |v|^2 Id / 2``.  For a compressible field pass
    ``zeta = div(a v)``; the extra term ``a^{-1} zeta v^perp`` is then added.
    Returns ``||lhs - rhs||_2 / ||lhs||_2`` (zero when ``v = 0``).
    """
    grid = pin.grid
    lhs = curl(grid, v) * v
    lhs_norm = float(np.linalg.norm(lhs))
    if lhs_norm == 0.0:
        return 0.0
    stress = div_tensor(grid, pin.a * stress_tensor(v))
    rhs = -0.5 * dot(v, v) * perp(pin.grad_h) - perp(pin.a_inv * stress)
    if zeta is not None:
        rhs = rhs + pin.a_inv * zeta * perp(v)
    return float(np.linalg.norm(lhs - rhs)) / lhs_norm


@dataclass
class EnergyReference:
    """Reference velocity for the relative energy (zero by default)."""

    v_ref: np.ndarray | None = None
    zeta_ref: np.ndarray | None = None


def energy(state: State, pin: PinningProfile, ref: EnergyReference = EnergyReference()) -> float:
    """``int a |v - v_ref|^2``."""
    dv = state.v if ref.v_ref is None else state.v - ref.v_ref
    return pin.grid.integrate(pin.a * dot(dv, dv))


def energy_rate(
    state: State,
    pin: PinningProfile,
    psi_force: np.ndarray,
    params: ModelParams,
    ref: EnergyReference = EnergyReference(),
) -> float:
    """Right-hand side of the energy balance of the velocity equation.

    ``-2 lam int a^{-1} zeta^2 + 2 lam int a^{-1} zeta zeta_ref
    - 2 alpha int a |v - v_ref|^2 omega
    + 2 int a F_ref . (v - v_ref) omega`` with
    ``F_ref = -alpha (Psi + v_ref) + beta (Psi + v_ref)^perp``.
    The mobility terms are dropped in the incompressible regime.
    """
    grid = pin.grid
    v_ref = np.zeros_like(state.v) if ref.v_ref is None else ref.v_ref
    dv = state.v - v_ref
    omega = state.omega
    total = -2.0 * params.alpha * grid.integrate(pin.a * dot(dv, dv) * omega)
    total += 2.0 * grid.integrate(
        pin.a * dot(flux_field(v_ref, psi_force, params.alpha, params.beta), dv) * omega
    )
    if params.compressible and params.lam > 0:
        total -= 2.0 * params.lam * grid.integrate(pin.a_inv * state.zeta**2)
        if ref.zeta_ref is not None:
            total += 2.0 * params.lam * grid.integrate(pin.a_inv * state.zeta * ref.zeta_ref)
    return total


def centered_derivative(times, values) -> np.ndarray:
    """Three-point derivative on a nonuniform grid at the interior points."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    h1 = t[1:-1] - t[:-2]
    h2 = t[2:] - t[1:-1]
    return (
        -h2 / (h1 * (h1 + h2)) * y[:-2]
        + (h2 - h1) / (h1 * h2) * y[1:-1]
        + h1 / (h2 * (h1 + h2)) * y[2:]
    )


@dataclass
class EnergySeries:
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    residual: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residual)) if self.residual.size else 0.0


def energy_identity_residual(
    traj: Trajectory,
    pin: PinningProfile,
    psi_force: np.ndarray,
    params: ModelParams,
    ref: EnergyReference = EnergyReference(),
) -> EnergySeries:
    """Compare the differenced energy with the instantaneous balance.

    The residual at each interior snapshot is ``|dE/dt - rhs| / |rhs|``,
    with ``|rhs|`` floored at ``1e-12 * max(1, max E)`` so that frozen
    dynamics give zero.

    Raises
    ------
    InsufficientSnapshots
        With fewer than three snapshots.
    """
    if len(traj.snapshots) < 3:
        raise InsufficientSnapshots(f"need at least 3 snapshots, have {len(traj.snapshots)}")
    times = np.array(traj.times)
    E = np.array([energy(s, pin, ref) for s in traj.snapshots])
    lhs = centered_derivative(times, E)
    rhs = np.array([energy_rate(s, pin, psi_force, params, ref) for s in traj.snapshots[1:-1]])
    floor = 1e-12 * max(1.0, float(np.max(np.abs(E))))
    res = np.abs(lhs - rhs) / np.maximum(np.abs(rhs), floor)
    return EnergySeries(times[1:-1], lhs, rhs, res)


# --------------------------------------------------------------------------
# decay bounds


def _is_zero_forcing(psi_force) -> bool:
    return psi_force is None or not np.any(psi_force)


def remark44_regime(params: ModelParams, pin: PinningProfile, psi_force) -> bool:
    """Zero forcing, ``alpha > 0`` and either ``beta = 0`` or flat incompressible."""
    if params.alpha <= 0 or not _is_zero_forcing(psi_force):
        return False
    if params.beta == 0:
        return True
    return (not params.compressible) and pin.is_flat


def sharp_decay_bound(omega0: np.ndarray, grid: Grid2D, alpha: float, t: float, p: float) -> float:
    """``(int omega0^p (1 + alpha t omega0)^{1-p})^{1/p}`` (``p = inf``: max of the integrand root)."""
    w = np.maximum(omega0, 0.0)
    decayed = w / (1.0 + alpha * t * w)
    if math.isinf(p):
        return float(np.max(decayed))
    # omega0^p (1 + a t omega0)^{1-p} = decayed^p (1 + a t omega0)
    peak = float(np.max(decayed))
    if peak == 0:
        return 0.0
    integrand = (decayed / peak) ** p * (1.0 + alpha * t * w)
    return peak * grid.integrate(integrand) ** (1.0 / p)


def universal_decay_bound(alpha: float, t: float, p: float) -> float:
    """``(alpha t)^{-(1 - 1/p)}``; infinite at ``t = 0``."""
    if t <= 0:
        return math.inf
    expo = 1.0 if math.isinf(p) else 1.0 - 1.0 / p
    return (alpha * t) ** (-expo)


@dataclass
class DecayMargins:
    times: np.ndarray
    norms: np.ndarray
    sharp: np.ndarray
    universal: np.ndarray

    @property
    def margin_sharp(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.sharp > 0, self.norms / self.sharp, 0.0)

    @property
    def margin_universal(self) -> np.ndarray:
        return self.norms / self.universal


def check_decay_remark44(
    traj: Trajectory,
    omega0: np.ndarray,
    params: ModelParams,
    p: float,
    pin: PinningProfile,
    psi_force=None,
) -> DecayMargins:
    """Margins of ``||omega^t||_p`` against the sharp and universal decay bounds.

    Raises
    ------
    RegimeMismatch
        Outside the regime where the bounds hold (nonzero forcing,
        ``alpha <= 0``, or a Hall term with pinning or compressibility).
    """
    if not remark44_regime(params, pin, psi_force):
        raise RegimeMismatch("decay bounds need Psi = 0, alpha > 0 and beta = 0 (or flat incompressible)")
    grid = pin.grid
    times = np.array(traj.times)
    norms = np.array([lp_norm(s.omega, grid, p) for s in traj.snapshots])
    sharp = np.array([sharp_decay_bound(omega0, grid, params.alpha, t, p) for t in times])
    univ = np.array([universal_decay_bound(params.alpha, t, p) for t in times])
    return DecayMargins(times, norms, sharp, univ)


def fitted_constant_112(times, linf, alpha: float) -> np.ndarray:
    """Smallest ``C_t >= 0`` with ``linf(t) <= 1/(alpha t) + C e^{C t} / alpha``, per time.

    Solves ``C t e^{C t} = alpha t (linf - 1/(alpha t))`` with the Lambert W
    function; ``t = 0`` entries are ``nan`` (the bound is singular there).
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(linf, dtype=float)
    out = np.full(t.shape, np.nan)
    pos = t > 0
    excess = alpha * y[pos] - 1.0 / t[pos]
    c = np.zeros(excess.shape)
    over = excess > 0
    c[over] = np.real(lambertw(excess[over] * t[pos][over])) / t[pos][over]
    out[pos] = c
    return out


@dataclass
class Bound112Report:
    C: float
    per_time: np.ndarray


def check_bound_112(traj: Trajectory, params: ModelParams, pin: PinningProfile) -> Bound112Report:
    """Fit the constant of the parabolic smoothing bound over a trajectory.

    Raises
    ------
    RegimeMismatch
        Unless ``alpha > 0`` and ``beta = 0``.
    """
    if not params.parabolic:
        raise RegimeMismatch("the smoothing bound needs alpha > 0 and beta = 0")
    linf = [lp_norm(s.omega, pin.grid, math.inf) for s in traj.snapshots]
    per_time = fitted_constant_112(traj.times, linf, params.alpha)
    finite = per_time[np.isfinite(per_time)]
    return Bound112Report(float(np.max(finite)) if finite.size else 0.0, per_time)


def constants_agree(c_small: float, c_large: float, rel: float = 0.1) -> bool:
    """Amplitude-independence check for fitted constants (both zero counts as agreement)."""
    scale = max(abs(c_small), abs(c_large))
    return scale == 0.0 or abs(c_large - c_small) <= rel * scale


# --------------------------------------------------------------------------
# pressure


@dataclass
class PressureCheck:
    residual: float
    harmonic: float


def pressure_consistency(
    state: State,
    pin: PinningProfile,
    psi_force: np.ndarray,
    params: ModelParams,
    opts: EllipticOptions = EllipticOptions(),
) -> PressureCheck:
    """Residual of the weighted Helmholtz-Leray splitting of ``omega F``.

    With ``X`` solving ``div(a^{-1} grad X) = div(omega w)`` and ``P`` from
    :func:`meanvort.elliptic.pressure`, the residual field
    ``a^{-1} grad^perp X - (omega F + grad P)`` vanishes up to a weighted
    harmonic field, which a torus allows.  That component is fitted and
    removed; ``harmonic`` reports its relative size.  Both numbers are
    relative to ``||omega v||_2`` (zero when ``omega v = 0``).
    """
    grid = pin.grid
    omega, v = state.omega, state.v
    scale = float(np.linalg.norm(omega * v))
    if scale == 0.0:
        return PressureCheck(0.0, 0.0)
    w = transport_velocity(v, psi_force, params)
    X, _ = solve_div_b_grad(grid, pin.a_inv, -div(grid, omega * w), opts)
    P, _ = pressure(omega, v, pin, psi_force, params.alpha, params.beta, opts)
    resid = pin.a_inv * perp(grad(grid, X)) - (omega * flux_field(v, psi_force, params.alpha, params.beta) + grad(grid, P))
    basis = harmonic_basis(pin, opts)
    harm = basis.combine(basis.coefficients(pin.a, resid))
    return PressureCheck(
        float(np.linalg.norm(resid - harm)) / scale, float(np.linalg.norm(harm)) / scale
    )


# --------------------------------------------------------------------------
# tabulation


@dataclass
class DiagRow:
    t: float
    mass: float
    linf: float
    l2: float
    lp: float
    p: float
    div_a_v_rel: float = math.nan
    delort_res: float = math.nan
    energy: float = math.nan
    energy_rhs_res: float = math.nan
    margin_r44_sharp: float = math.nan
    margin_r44_univ: float = math.nan
    fitted_C_112: float = math.nan

    def values(self) -> list[float]:
        return [getattr(self, f.name) for f in dc_fields(self)]


def format_value(x: float) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


@dataclass
class DiagnosticsRecorder:
    """Builds one :class:`DiagRow` per snapshot.

    Rows are released with a lag of one snapshot because the energy
    residual needs the neighbours on both sides; :meth:`finish` flushes the
    last row.
    """

    pin: PinningProfile
    psi_force: np.ndarray
    params: ModelParams
    omega0: np.ndarray
    p: float = 2.0
    ref: EnergyReference = field(default_factory=EnergyReference)
    _pending: list = field(default_factory=list)
    _count: int = 0
    _c_max: float = 0.0

    def _base_row(self, s: State) -> DiagRow:
        grid = self.pin.grid
        params = self.params
        vnorm = float(np.linalg.norm(s.v))
        div_av = div(grid, self.pin.a * s.v)
        if params.compressible:
            div_rel = float(np.linalg.norm(div_av - s.zeta) / vnorm) if vnorm else 0.0
            delort = delort_residual(s.v, self.pin, zeta=div_av)
        else:
            div_rel = float(np.linalg.norm(div_av) / vnorm) if vnorm else 0.0
            delort = delort_residual(s.v, self.pin)
        row = DiagRow(
            t=s.t,
            mass=mass(s.omega, grid),
            linf=lp_norm(s.omega, grid, math.inf),
            l2=lp_norm(s.omega, grid, 2.0),
            lp=lp_norm(s.omega, grid, self.p),
            p=self.p,
            div_a_v_rel=div_rel,
            delort_res=delort,
            energy=energy(s, self.pin, self.ref),
        )
        if remark44_regime(params, self.pin, self.psi_force):
            sharp = sharp_decay_bound(self.omega0, grid, params.alpha, s.t, self.p)
            row.margin_r44_sharp = row.lp / sharp if sharp > 0 else 0.0
            row.margin_r44_univ = row.lp / universal_decay_bound(params.alpha, s.t, self.p)
        if params.parabolic:
            c = fitted_constant_112([s.t], [row.linf], params.alpha)[0]
            if not math.isnan(c):
                self._c_max = max(self._c_max, float(c))
                row.fitted_C_112 = self._c_max
        return row

    def add(self, s: State) -> list[DiagRow]:
        """Register a snapshot and return the rows that became complete."""
        row = self._base_row(s)
        rate = energy_rate(s, self.pin, self.psi_force, self.params, self.ref)
        self._pending.append((row, rate))
        self._count += 1
        if self._count == 1:
            return [row]
        if len(self._pending) < 3:
            return []
        (r0, _), (r1, rate1), (r2, _) = self._pending
        lhs = centered_derivative([r0.t, r1.t, r2.t], [r0.energy, r1.energy, r2.energy])[0]
        floor = 1e-12 * max(1.0, abs(r0.energy), abs(r1.energy), abs(r2.energy))
        r1.energy_rhs_res = abs(lhs - rate1) / max(abs(rate1), floor)
        self._pending.pop(0)
        return [r1]

    def finish(self) -> list[DiagRow]:
        """Release the last row (its energy residual stays ``nan``)."""
        if self._count < 2:
            return []
        return [self._pending[-1][0]]


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow([format_value(x) for x in r.values()])
    return buf.getvalue()


def parse_csv(text: str) -> list[dict]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != CSV_HEADER:
        raise ValueError("CSV header does not match the diagnostics schema")
    return [{k: float(v) for k, v in zip(header, row)} for row in reader]
