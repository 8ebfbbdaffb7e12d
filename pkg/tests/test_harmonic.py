import numpy as np
import pytest

from chargeflow.errors import (
    EvenDimension,
    TooCloseToOrigin,
    UnsupportedDimension,
)
from chargeflow.harmonic import (
    GridSpec,
    TabulatedPotential,
    build_almost_harmonic,
    cache_key,
    lambda_harmonic_poly,
    load_or_build_almost_harmonic,
    radial_laplacian,
    sphere_overlap_potential,
)


class TestRecurrence:
    def test_d3_is_constant(self):
        pot = lambda_harmonic_poly(3, 1.0)
        np.testing.assert_array_equal(pot.coeffs, [1.0])
        r = np.linspace(0.2, 4, 10)
        np.testing.assert_allclose(pot.phi(r), np.exp(-r) / r)

    def test_d7_lam1(self):
        pot = lambda_harmonic_poly(7, 1.0)
        np.testing.assert_allclose(pot.coeffs, [1.0, 1.0, 1.0 / 3.0])

    def test_d7_lam4(self):
        pot = lambda_harmonic_poly(7, 4.0)
        np.testing.assert_allclose(pot.coeffs, [1.0, 2.0, 4.0 / 3.0])

    @pytest.mark.parametrize("d,lam", [(3, 1.0), (5, 2.0), (7, 1.0), (7, 4.0), (11, 1.0), (15, 0.5)])
    def test_ode_residual_vanishes(self, d, lam):
        pot = lambda_harmonic_poly(d, lam)
        np.testing.assert_allclose(pot.ode_residual_coeffs(), 0.0, atol=1e-12)

    def test_coefficients_positive_and_ratio_bounded(self):
        pot = lambda_harmonic_poly(11, 2.0)
        c = pot.coeffs
        assert np.all(c > 0)
        assert np.all(c[1:] <= np.sqrt(2.0) * c[:-1] + 1e-15)

    def test_even_dimension_rejected(self):
        with pytest.raises(EvenDimension):
            lambda_harmonic_poly(4, 1.0)

    def test_derivative_matches_fd(self):
        pot = lambda_harmonic_poly(7, 2.0)
        r = np.linspace(0.3, 5, 20)
        h = 1e-6
        fd = (pot.phi(r + h) - pot.phi(r - h)) / (2 * h)
        np.testing.assert_allclose(pot.phi_deriv(r), fd, rtol=1e-7)


class TestRadialLaplacian:
    def test_quadratic(self):
        # |x|^2 has Laplacian 2d
        assert radial_laplacian(lambda r: r * r, 1.0, 3, 1e-4) == pytest.approx(6.0, abs=1e-6)

    def test_coulomb_harmonic(self):
        assert radial_laplacian(lambda r: 1.0 / r, 2.0, 3, 1e-4) == pytest.approx(0.0, abs=1e-6)

    def test_eigenfunction_value(self):
        f = lambda r: np.exp(-r) / r
        val = radial_laplacian(f, 2.0, 3, 1e-4)
        assert val == pytest.approx(np.exp(-2.0) / 2.0, abs=1e-5)
        assert val == pytest.approx(0.067668, abs=1e-5)

    def test_origin_guard(self):
        with pytest.raises(TooCloseToOrigin):
            radial_laplacian(lambda r: r, 0.1, 3, 0.06)

    def test_second_order_convergence(self):
        f = lambda r: np.exp(-r) / r
        exact = np.exp(-1.5) / 1.5
        errs = [abs(radial_laplacian(f, 1.5, 3, h) - exact) for h in (2e-3, 1e-3)]
        assert errs[1] < errs[0] / 3.0  # O(h^2): halving h quarters the error


class TestSphereOverlap:
    def test_outside_support(self):
        value, deriv = sphere_overlap_potential(2.0, 3, 2.5)
        assert value == 0.0 and deriv == 0.0

    def test_full_overlap(self):
        value, _ = sphere_overlap_potential(2.0, 3, 0.0)
        assert value == pytest.approx(1.0, abs=1e-12)

    def test_lens_ratio_d3(self):
        value, deriv = sphere_overlap_potential(2.0, 3, 1.0)
        assert value == pytest.approx(5.0 / 16.0, abs=1e-10)
        assert deriv == pytest.approx(-0.5625, abs=1e-10)

    @pytest.mark.parametrize("d", [3, 7])
    def test_derivative_matches_fd(self, d):
        rng = np.random.default_rng(5)
        for _ in range(100):
            t = rng.uniform(0.5, 4.0)
            r = rng.uniform(0.05, t * 0.95)
            h = 1e-5
            vp, _ = sphere_overlap_potential(t, d, r + h)
            vm, _ = sphere_overlap_potential(t, d, r - h)
            _, deriv = sphere_overlap_potential(t, d, r)
            assert deriv == pytest.approx((vp - vm) / (2 * h), abs=1e-6)


class TestConstruction:
    def test_normalized_at_origin(self, almost_table):
        assert almost_table.value(0.0) == pytest.approx(1.0, abs=1e-12)

    def test_eigenfunction_tail_ratio(self, almost_table):
        ratio = almost_table.value(1.0) / almost_table.value(2.0)
        assert ratio == pytest.approx(2.0 * np.e, abs=1e-3)

    def test_eigenrelation_outside_eps(self, almost_table):
        tab = almost_table
        lam, eps = tab.lam, tab.eps
        radii = np.concatenate(
            [eps + (10 * eps - eps) * np.arange(1, 51) / 51.0, np.linspace(1.0, 5.0, 50)]
        )
        for r in radii:
            h = min(0.01 * max(1.0, r), (r - eps) / 2.0)
            lap = radial_laplacian(tab.value, r, tab.d, h)
            val = tab.value(r)
            assert abs(lap - lam * val) <= 1e-3 * max(1.0, lam * val)

    def test_monotone_and_nonpositive_slope(self, almost_table):
        assert np.all(np.diff(almost_table.values) <= 1e-12)
        assert np.all(almost_table.derivs <= 1e-12)

    def test_envelope_bound(self, almost_table):
        # normalized tail bound with explicit constant 1 at d=3, lam=1
        tab = almost_table
        r = tab.r_grid[tab.r_grid >= tab.eps]
        vals = tab.values[tab.r_grid >= tab.eps]
        bound = (1.0 + r) ** 3 * np.exp(1.0 - r) / r
        assert np.all(vals <= bound)

    def test_constant_extension_below_grid(self, almost_table):
        tiny = almost_table.r_grid[1] / 4.0
        assert almost_table.value(tiny) == almost_table.values[0]
        assert almost_table.deriv(tiny) == 0.0

    def test_analytic_tail_beyond_grid(self, almost_table):
        r = almost_table.grid_spec.r_max + 4.0
        expected = np.exp(-r) / r / almost_table.z
        assert almost_table.value(r) == pytest.approx(expected, rel=1e-12)

    def test_interpolant_derivative_consistency(self, almost_table):
        probe = np.linspace(0.25, 4.0, 100)
        h = 1e-6
        fd = (almost_table.value(probe + h) - almost_table.value(probe - h)) / (2 * h)
        np.testing.assert_allclose(almost_table.deriv(probe), fd, atol=1e-8)

    def test_matching_radius_is_knot(self, almost_table):
        assert np.any(almost_table.r_grid == almost_table.eps)

    def test_dimension_guards(self):
        with pytest.raises(UnsupportedDimension):
            build_almost_harmonic(5, 0.1)  # 5 != 3 mod 4
        with pytest.raises(UnsupportedDimension):
            build_almost_harmonic(7, 0.1)  # weight needs the d=3 closed form
        with pytest.raises(ValueError):
            build_almost_harmonic(3, 1.5)

    def test_lambda_scaling(self):
        tab = build_almost_harmonic(3, 0.1, 4.0, grid=GridSpec(n=1024))
        # tail is e^{-2r}/r up to normalization
        ratio = tab.value(1.0) / tab.value(2.0)
        assert ratio == pytest.approx((np.exp(-2.0) / 1.0) / (np.exp(-4.0) / 2.0), rel=1e-6)


class TestSerializationAndCache:
    def test_round_trip(self, almost_table, tmp_path):
        path = tmp_path / "tab.json"
        almost_table.save(path)
        again = TabulatedPotential.load(path)
        probe = np.linspace(0.0, 6.0, 50)
        np.testing.assert_array_equal(again.value(probe), almost_table.value(probe))
        np.testing.assert_array_equal(again.deriv(probe), almost_table.deriv(probe))
        assert again.z == almost_table.z

    def test_cache_key_sensitivity(self):
        g = GridSpec()
        base = cache_key(3, 0.1, 1.0, g)
        assert cache_key(3, 0.2, 1.0, g) != base
        assert cache_key(3, 0.1, 2.0, g) != base
        assert cache_key(3, 0.1, 1.0, GridSpec(n=2048)) != base

    def test_load_or_build_uses_cache(self, tmp_path):
        grid = GridSpec(n=512)
        first = load_or_build_almost_harmonic(3, 0.2, 1.0, grid, directory=str(tmp_path))
        assert len(list(tmp_path.iterdir())) == 1
        second = load_or_build_almost_harmonic(3, 0.2, 1.0, grid, directory=str(tmp_path))
        np.testing.assert_array_equal(first.values, second.values)
