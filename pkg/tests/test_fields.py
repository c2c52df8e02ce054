import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meanvort.fields import (
    Grid2D,
    ModelParams,
    Regime,
    State,
    curl,
    div,
    flat_pinning,
    grad,
    laplacian,
    make_pinning,
    perp,
)
from meanvort.presets import cosine_potential, random_potential

from conftest import BOX, smooth_field


class TestGrid:
    @pytest.mark.parametrize("n", [0, 4, 7, 12, 100])
    def test_rejects_bad_sizes(self, n):
        with pytest.raises(ValueError):
            Grid2D(n, BOX)

    def test_rejects_nonpositive_box(self):
        with pytest.raises(ValueError):
            Grid2D(16, 0.0)

    def test_node_coordinates(self):
        g = Grid2D(16, 4.0)
        x, y = g.coords
        assert g.dx == 0.25
        assert x[3, 5] == pytest.approx(0.75)
        assert y[3, 5] == pytest.approx(1.25)

    def test_integrate_constant(self, grid64):
        assert grid64.integrate(np.ones((64, 64))) == pytest.approx(BOX**2, rel=1e-14)


class TestCalculus:
    def test_curl_of_eigenmode(self, grid64):
        x, y = grid64.coords
        k = 2 * np.pi / BOX
        v = np.stack([-np.sin(k * y), np.sin(k * x)])
        expected = k * (np.cos(k * x) + np.cos(k * y))
        assert np.max(np.abs(curl(grid64, v) - expected)) <= 1e-12

    def test_curl_of_gradient_vanishes(self, grid64):
        phi = smooth_field(grid64, 1)
        assert np.max(np.abs(curl(grid64, grad(grid64, phi)))) <= 1e-10

    def test_curl_matches_centered_differences_to_second_order(self):
        errors = []
        for n in (32, 64, 128):
            g = Grid2D(n, BOX)
            x, y = g.coords
            k = 2 * np.pi / BOX
            v = np.stack([np.sin(k * y) * np.cos(2 * k * x), np.cos(k * x + 3 * k * y)])
            fd = (np.roll(v[1], -1, 0) - np.roll(v[1], 1, 0)) / (2 * g.dx) - (
                np.roll(v[0], -1, 1) - np.roll(v[0], 1, 1)
            ) / (2 * g.dx)
            errors.append(np.max(np.abs(curl(g, v) - fd)))
        orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        assert np.all(orders > 1.9)

    def test_gradient_of_eigenmode(self, grid64):
        x, _ = grid64.coords
        k = 2 * np.pi / BOX
        gr = grad(grid64, np.sin(k * x))
        assert np.max(np.abs(gr[0] - k * np.cos(k * x))) <= 1e-12
        assert np.max(np.abs(gr[1])) <= 1e-12

    def test_div_perp_grad_vanishes(self, grid64):
        s = smooth_field(grid64, 2)
        assert np.max(np.abs(div(grid64, perp(grad(grid64, s))))) <= 1e-10

    def test_laplacian_is_div_grad_on_resolved_modes(self, grid64):
        s = smooth_field(grid64, 3)
        assert np.allclose(laplacian(grid64, s), div(grid64, grad(grid64, s)), atol=1e-10)

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=20, deadline=None)
    def test_perp_twice_is_minus_identity(self, seed):
        v = np.random.default_rng(seed).normal(size=(2, 8, 8))
        assert np.array_equal(perp(perp(v)), -v)

    def test_shape_errors(self, grid64):
        with pytest.raises(ValueError):
            curl(grid64, np.zeros((64, 64)))
        with pytest.raises(ValueError):
            grad(grid64, np.zeros((2, 64, 64)))


class TestPinning:
    def test_flat_weight(self, grid64):
        pin = make_pinning(grid64, np.zeros((64, 64)))
        assert np.all(pin.a == 1.0)
        assert np.all(pin.grad_h == 0.0)
        assert pin.is_flat
        assert flat_pinning(grid64).is_flat

    def test_cosine_gradient(self, grid64):
        x, _ = grid64.coords
        k = 2 * np.pi / BOX
        eps = 0.3
        pin = make_pinning(grid64, eps * np.cos(k * x))
        assert np.max(np.abs(pin.grad_h[0] + eps * k * np.sin(k * x))) <= 1e-12
        assert np.max(np.abs(pin.grad_h[1])) <= 1e-12

    def test_log_round_trip(self, grid64):
        h = random_potential(grid64, 1.5, seed=9)
        pin = make_pinning(grid64, h)
        assert np.max(np.abs(np.log(pin.a) - h)) <= 1e-12
        assert np.max(np.abs(pin.a * pin.a_inv - 1.0)) <= 1e-12
        assert pin.a.min() > 0

    def test_rejects_nonfinite(self, grid64):
        h = np.zeros((64, 64))
        h[3, 3] = np.nan
        with pytest.raises(ValueError):
            make_pinning(grid64, h)

    def test_rejects_overflowing_weight(self, grid64):
        with pytest.raises(OverflowError):
            make_pinning(grid64, cosine_potential(grid64, 800.0))


class TestParams:
    def test_degenerate_regime_needs_zero_beta_and_lambda(self):
        with pytest.raises(ValueError):
            ModelParams(1.0, 0.1, 0.0, Regime.DEGENERATE_PARABOLIC)
        with pytest.raises(ValueError):
            ModelParams(1.0, 0.0, 0.2, Regime.DEGENERATE_PARABOLIC)
        p = ModelParams(2.0, 0.0, 0.0, "degenerate_parabolic")
        assert p.compressible and p.parabolic

    def test_negative_mobility_rejected(self):
        with pytest.raises(ValueError):
            ModelParams(1.0, 0.0, -1.0, "compressible")

    def test_state_copy_is_deep(self, grid64):
        s = State(0.0, np.ones((64, 64)), np.zeros((64, 64)), np.zeros((2, 64, 64)))
        c = s.copy()
        c.omega[0, 0] = 5.0
        assert s.omega[0, 0] == 1.0
