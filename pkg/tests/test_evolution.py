import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meanvort.elliptic import EllipticOptions, reconstruct_velocity
from meanvort.errors import CflViolation
from meanvort.evolution import (
    Limiter,
    RunAborted,
    StepOptions,
    ZetaScheme,
    advance,
    initial_state,
    picard_local,
    run,
    step_vorticity,
    step_zeta,
    transport_velocity,
    zeta_source,
)
from meanvort.fields import Grid2D, ModelParams, State, div, flat_pinning, laplacian, make_pinning, perp
from meanvort.presets import cosine_potential, gaussian, preset_forcing, preset_initial

from conftest import BOX, smooth_field


def _spectral_shift(grid, field, shift):
    kx = 2 * np.pi * np.fft.fftfreq(grid.n, grid.dx)[:, None]
    ky = 2 * np.pi * np.fft.rfftfreq(grid.n, grid.dx)[None, :]
    phase = np.exp(-1j * (kx * shift[0] + ky * shift[1]))
    return np.fft.irfft2(np.fft.rfft2(field) * phase, s=field.shape)


class TestTransportVelocity:
    def setup_method(self):
        rng = np.random.default_rng(1)
        self.v = rng.normal(size=(2, 8, 8))
        self.zero = np.zeros((2, 8, 8))

    def test_parabolic(self):
        w = transport_velocity(self.v, self.zero, ModelParams(1.0, 0.0))
        assert np.array_equal(w, perp(self.v))

    def test_conservative(self):
        w = transport_velocity(self.v, self.zero, ModelParams(0.0, 1.0))
        assert np.array_equal(w, self.v)

    def test_frozen(self):
        assert not transport_velocity(self.v, self.zero, ModelParams(0.0, 0.0)).any()


class TestStepVorticity:
    def test_zero_flux_is_identity(self, grid64):
        omega = gaussian(grid64, 0.5)
        out = step_vorticity(omega, np.zeros((2, 64, 64)), 0.1, grid64)
        assert np.array_equal(out, omega)

    def test_constant_flux_translates_at_second_order(self):
        # d_t omega = div(omega w) carries omega by -w.
        c = np.array([0.7, 0.3])
        errors = []
        for n in (64, 128, 256):
            grid = Grid2D(n, BOX)
            omega = gaussian(grid, 0.6)
            w = np.broadcast_to(c[:, None, None], (2, n, n)).copy()
            steps = math.ceil(1.0 / (0.4 * grid.dx))
            out = omega
            for _ in range(steps):
                out = step_vorticity(out, w, 1.0 / steps, grid)
            exact = _spectral_shift(grid, omega, -c)
            errors.append(grid.integrate(np.abs(out - exact)))
        orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        assert orders[-1] >= 1.75
        assert np.all(np.diff(orders) > 0)

    @given(st.integers(0, 2**31 - 1), st.sampled_from(list(Limiter)))
    @settings(max_examples=25, deadline=None)
    def test_mass_is_conserved(self, seed, limiter):
        grid = Grid2D(32, BOX)
        rng = np.random.default_rng(seed)
        omega = rng.random((32, 32))
        w = np.stack([smooth_field(grid, seed % 1000), smooth_field(grid, seed % 1000 + 1)])
        speed = np.max(np.abs(w[0])) + np.max(np.abs(w[1]))
        dt = 0.4 * grid.dx / speed
        out = step_vorticity(omega, w, dt, grid, StepOptions(limiter=limiter))
        assert abs(out.sum() - omega.sum()) <= 1e-12 * omega.sum()

    @given(st.integers(0, 2**31 - 1), st.sampled_from([Limiter.VAN_LEER, Limiter.MINMOD]))
    @settings(max_examples=25, deadline=None)
    def test_limited_scheme_preserves_positivity(self, seed, limiter):
        grid = Grid2D(32, BOX)
        rng = np.random.default_rng(seed)
        omega = rng.random((32, 32)) * (rng.random((32, 32)) > 0.5)
        w = np.stack([smooth_field(grid, seed % 997), smooth_field(grid, seed % 997 + 3)])
        speed = np.max(np.abs(w[0])) + np.max(np.abs(w[1]))
        dt = 0.5 * grid.dx / speed
        out = step_vorticity(omega, w, dt, grid, StepOptions(cfl=0.5, limiter=limiter))
        assert out.min() >= -1e-12

    def test_cfl_violation(self, grid64):
        w = np.ones((2, 64, 64))
        with pytest.raises(CflViolation):
            step_vorticity(np.ones((64, 64)), w, grid64.dx, grid64)


class TestStepZeta:
    def test_heat_eigenmode_is_exact(self, grid64):
        pin = flat_pinning(grid64)
        x, _ = grid64.coords
        k = 2 * np.pi / BOX
        lam, dt = 0.7, 0.05
        params = ModelParams(1.0, 0.0, lam, "compressible")
        zero = np.zeros((64, 64))
        out = step_zeta(np.sin(k * x), zero, np.zeros((2, 64, 64)), pin, np.zeros((2, 64, 64)), params, dt)
        assert np.max(np.abs(out - math.exp(-lam * k**2 * dt) * np.sin(k * x))) <= 1e-8

    def test_source_quadrature_without_mobility(self, rough64):
        grid = rough64.grid
        omega = gaussian(grid, 0.7)
        v, _ = reconstruct_velocity(omega, np.zeros_like(omega), rough64)
        psi = preset_forcing(grid, "cosine", 0.2, rough64)
        params = ModelParams(1.0, 0.4, 0.0, "compressible")
        expected_rate = div(grid, rough64.a * omega * (-(psi + v) + 0.4 * perp(psi + v)))
        errs = []
        for dt in (1e-2, 5e-3):
            out = step_zeta(np.zeros_like(omega), omega, v, rough64, psi, params, dt)
            errs.append(np.max(np.abs(out - dt * expected_rate)))
        # Frozen source: the update is exact up to rounding.
        assert max(errs) <= 1e-12 * np.max(np.abs(expected_rate))

    def test_manufactured_solution_second_order(self):
        k = 2 * np.pi / BOX
        errors = []
        for n, steps in ((32, 20), (64, 40), (128, 80)):
            grid = Grid2D(n, BOX)
            x, y = grid.coords
            pin = make_pinning(grid, cosine_potential(grid, 0.4))
            params = ModelParams(1.0, 0.3, 0.5, "compressible")
            omega = gaussian(grid, 0.8)
            v, _ = reconstruct_velocity(omega, np.zeros_like(omega), pin)
            psi = preset_forcing(grid, "cosine", 0.2, pin)
            src = zeta_source(omega, v, pin, psi, params)

            def exact(t):
                return np.exp(-t) * np.sin(k * x) * np.cos(2 * k * y) + np.cos(t) * np.sin(k * y)

            def rate(t):
                return -np.exp(-t) * np.sin(k * x) * np.cos(2 * k * y) - np.sin(t) * np.sin(k * y)

            def extra(t):
                z = exact(t)
                return rate(t) - params.lam * (laplacian(grid, z) - div(grid, z * pin.grad_h)) - src

            dt = 1.0 / steps
            z = exact(0.0)
            for i in range(steps):
                z = step_zeta(
                    z, omega, v, pin, psi, params, dt,
                    omega_end=omega, v_end=v, t=i * dt, extra_source=extra,
                )
            errors.append(np.max(np.abs(z - exact(1.0))))
        orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        assert np.all(orders >= 1.9)

    def test_explicit_scheme_agrees_with_imex_on_small_steps(self, rough64):
        grid = rough64.grid
        params = ModelParams(1.0, 0.0, 0.3, "compressible")
        omega, zeta = preset_initial(grid, "gaussian", sigma=0.7, zeta_amplitude=0.5)
        v, _ = reconstruct_velocity(omega, zeta, rough64)
        psi = np.zeros_like(v)
        dt = 1e-3
        out = {}
        for scheme in ZetaScheme:
            z = zeta
            for _ in range(20):
                z = step_zeta(z, omega, v, rough64, psi, params, dt, StepOptions(zeta_scheme=scheme))
            out[scheme] = z
        diff = np.max(np.abs(out[ZetaScheme.IMEX] - out[ZetaScheme.EXPLICIT]))
        assert diff <= 1e-4 * np.max(np.abs(zeta))

    def test_incompressible_regime_rejected(self, flat64):
        z = np.zeros((64, 64))
        with pytest.raises(ValueError):
            step_zeta(z, z, np.zeros((2, 64, 64)), flat64, np.zeros((2, 64, 64)), ModelParams(1.0), 0.1)

    def test_explicit_stability_limit(self, flat64):
        z = np.zeros((64, 64))
        params = ModelParams(1.0, 0.0, 1.0, "compressible")
        with pytest.raises(CflViolation):
            step_zeta(
                z, z, np.zeros((2, 64, 64)), flat64, np.zeros((2, 64, 64)), params, 1.0,
                StepOptions(zeta_scheme=ZetaScheme.EXPLICIT),
            )


class TestAdvance:
    def test_frozen_dynamics(self, rough64):
        grid = rough64.grid
        params = ModelParams(0.0, 0.0, 0.0, "compressible")
        omega, zeta = preset_initial(grid, "gaussian", sigma=0.6, zeta_amplitude=0.3)
        s0 = initial_state(omega, zeta, rough64, params)
        psi = preset_forcing(grid, "cosine", 0.3, rough64)
        s1 = advance(s0, rough64, psi, params, 0.2)
        assert np.array_equal(s1.omega, s0.omega)
        assert np.array_equal(s1.zeta, s0.zeta)
        assert np.max(np.abs(s1.v - s0.v)) <= 1e-10 * np.max(np.abs(s0.v))
        assert s1.t == pytest.approx(0.2)

    def test_incompressible_velocity_stays_weighted_solenoidal(self, rough64):
        grid = rough64.grid
        params = ModelParams(1.0, 0.5)
        omega, _ = preset_initial(grid, "gaussian", c=2.0, sigma=0.6)
        psi = preset_forcing(grid, "current", 0.3, rough64)
        s = initial_state(omega, np.zeros_like(omega), rough64, params)
        for _ in range(3):
            s = advance(s, rough64, psi, params, 0.02)
        assert np.max(np.abs(div(grid, rough64.a * s.v))) <= 1e-8


class TestRun:
    def _setup(self, n=64):
        grid = Grid2D(n, BOX)
        pin = make_pinning(grid, cosine_potential(grid, 0.3))
        params = ModelParams(1.0, 0.5, 0.5, "compressible")
        omega, zeta = preset_initial(grid, "gaussian", c=2.0, sigma=0.6, zeta_amplitude=0.2)
        psi = preset_forcing(grid, "cosine", 0.2, pin)
        return grid, pin, params, psi, initial_state(omega, zeta, pin, params)

    def test_zero_horizon(self):
        _, pin, params, psi, s0 = self._setup()
        traj = run(s0, pin, psi, params, 0.0)
        assert traj.times == [0.0]
        assert np.array_equal(traj.final.omega, s0.omega)

    def test_snapshots_and_final_time(self):
        _, pin, params, psi, s0 = self._setup()
        traj = run(s0, pin, psi, params, 0.3, snapshot_stride=2)
        assert traj.times[0] == 0.0 and traj.times[-1] == 0.3
        assert np.all(np.diff(traj.times) > 0)
        steps = len(traj.diagnostics_rows) - 1
        assert len(traj.times) == 1 + steps // 2 + (steps % 2 != 0)

    def test_deterministic(self):
        _, pin, params, psi, s0 = self._setup()
        a = run(s0, pin, psi, params, 0.2)
        b = run(s0, pin, psi, params, 0.2)
        assert a.diagnostics_rows == b.diagnostics_rows
        assert np.array_equal(a.final.v, b.final.v)

    def test_self_convergence_in_time(self):
        grid = Grid2D(128, BOX)
        pin = flat_pinning(grid)
        params = ModelParams(1.0, 0.5)
        omega, _ = preset_initial(grid, "gaussian", c=2.0, sigma=0.6)
        psi = preset_forcing(grid, "cosine", 0.3, pin)
        s0 = initial_state(omega, np.zeros_like(omega), pin, params)
        peaks = [
            run(s0, pin, psi, params, 0.5, StepOptions(cfl=cfl), snapshot_stride=10**6).final.omega.max()
            for cfl in (0.4, 0.2, 0.1)
        ]
        order = math.log2(abs(peaks[0] - peaks[1]) / abs(peaks[1] - peaks[2]))
        assert order >= 1.8

    def test_solver_failure_is_wrapped(self):
        _, pin, params, psi, s0 = self._setup()
        with pytest.raises(RunAborted) as info:
            run(s0, pin, psi, params, 0.2, elliptic_opts=EllipticOptions(tol=1e-14, max_iter=1))
        assert info.value.trajectory.times == [0.0]


class TestPicard:
    def test_zero_data_is_a_fixed_point(self, rough64):
        grid = rough64.grid
        params = ModelParams(1.0, 0.3, 0.5, "compressible")
        z = np.zeros((64, 64))
        s0 = initial_state(z, z, rough64, params)
        traj, rep = picard_local(s0, rough64, np.zeros((2, 64, 64)), params, 0.1, 3)
        assert max(rep.sup_diffs) <= 1e-10
        assert all(not s.v.any() for s in traj.snapshots)

    def test_first_iterate_is_frozen_field_transport(self, rough64):
        grid = rough64.grid
        params = ModelParams(1.0, 0.3)
        omega = gaussian(grid, 0.7)
        psi = preset_forcing(grid, "cosine", 0.2, rough64)
        s0 = initial_state(omega, np.zeros_like(omega), rough64, params)
        traj, _ = picard_local(s0, rough64, psi, params, 0.1, 1, steps=4)
        w = transport_velocity(s0.v, psi, params)
        expected = omega
        for _ in range(4):
            expected = step_vorticity(expected, w, 0.025, grid)
        assert np.max(np.abs(traj.final.omega - expected)) <= 1e-13

    def test_degenerate_regime_rejected(self, flat64):
        z = np.zeros((64, 64))
        params = ModelParams(1.0, 0.0, 0.0, "degenerate_parabolic")
        s0 = initial_state(z, z, flat64, params)
        with pytest.raises(ValueError):
            picard_local(s0, flat64, np.zeros((2, 64, 64)), params, 0.1, 2)
