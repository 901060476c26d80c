from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import eval_legendre

from eigenloc.errors import ParameterError
from eigenloc.geometry import ManifoldModel, Point, geodesic_distance
from eigenloc.harmonics import (
    random_window_field,
    torus_wave,
    zonal_field,
)
from eigenloc.spectral_filter import (
    FEJER,
    SMOOTH_BUMP,
    SmoothBumpWindow,
    WindowFilterSpec,
    apply_filter,
    cluster_project,
    default_k_max,
    filter_kernel,
    filter_multiplier,
    kernel_probe,
    kernel_profile,
    make_rho,
)


class TestWindow:
    @pytest.mark.parametrize("kind", [SMOOTH_BUMP, FEJER])
    def test_normalised_at_zero(self, kind):
        assert make_rho(kind)(0.0) == pytest.approx(1.0, abs=1e-8)

    def test_fejer_closed_form(self):
        assert make_rho(FEJER)(math.pi) == pytest.approx((2 / math.pi) ** 2, rel=1e-14)
        assert (2 / math.pi) ** 2 == pytest.approx(0.4053, abs=5e-5)

    @pytest.mark.parametrize("kind", [SMOOTH_BUMP, FEJER])
    def test_nonnegative(self, kind):
        s = np.linspace(-300, 300, 60001)
        assert make_rho(kind)(s).min() >= -1e-12

    def test_hat_vanishes_beyond_one(self):
        rho = make_rho(SMOOTH_BUMP)
        peak = rho.hat_numeric([0.0])[0]
        for t in (1.0, 1.2, 1.5, 3.0):
            assert abs(rho.hat_numeric([t])[0]) <= 1e-6 * peak

    def test_fejer_hat_vanishes_beyond_one(self):
        rho = make_rho(FEJER)
        # the quadratic tail needs a long integration range
        val = rho.hat_numeric([1.5], s_max=20000.0, step=0.05)[0]
        assert abs(val) <= 1e-6 * rho.hat(0.0)[0]

    def test_hat_closed_form_matches_quadrature(self):
        rho = make_rho(SMOOTH_BUMP)
        t = np.array([0.0, 0.25, 0.5, 0.75, 0.9])
        np.testing.assert_allclose(rho.hat(t), rho.hat_numeric(t), atol=1e-10)

    def test_hat_integrates_to_two_pi(self):
        # rho(0) = (1 / 2 pi) int rho_hat
        rho = make_rho(SMOOTH_BUMP)
        total = quad(lambda t: rho.hat(t)[0], -1, 1, points=[0.0])[0]
        assert total == pytest.approx(2 * math.pi, rel=1e-9)

    def test_spline_cache_matches_direct(self):
        rho = SmoothBumpWindow()
        s = np.linspace(0, 300, 1237)
        np.testing.assert_allclose(rho(s), rho.direct(s), atol=1e-13)

    def test_bump_support_limit(self):
        with pytest.raises(ParameterError):
            make_rho(SMOOTH_BUMP, half_width=0.6)
        with pytest.raises(ParameterError):
            make_rho("gauss")

    @pytest.mark.parametrize("N", range(7))
    def test_rapid_decay(self, N):
        rho = make_rho(SMOOTH_BUMP)
        s = np.linspace(0, 1000, 50001)
        weighted = rho(s) * (1 + s) ** N
        # bounded, and the far tail is already tiny compared with the peak
        assert np.isfinite(weighted).all()
        assert weighted[-5000:].max() < 1e-6 * max(weighted.max(), 1.0)

    def test_tail_cutoff(self):
        rho = make_rho(SMOOTH_BUMP)
        cut = rho.tail_cutoff(1e-12)
        s = np.linspace(cut, 999, 20000)
        assert rho(s).max() <= 1e-12
        assert rho.envelope(0.9 * cut) > 1e-12


class TestApplyFilter:
    @pytest.mark.parametrize("r", [0.1, 0.5, math.pi])
    def test_centred_eigenfunction(self, s2, r):
        f = zonal_field(s2, 20)
        spec = WindowFilterSpec(f.lam, r)
        g = apply_filter(f, spec)
        gain = 1 + spec.rho(2 * r * f.lam)
        assert gain >= 1
        mask = np.abs(f.samples) > 1e-6 * np.abs(f.samples).max()
        np.testing.assert_allclose(g.samples[mask] / f.samples[mask], gain, rtol=1e-10)

    def test_centred_identity_is_coefficientwise(self, t2):
        f = torus_wave(t2, (3, 4))
        spec = WindowFilterSpec(5.0, 1.0)
        g = apply_filter(f, spec)
        assert g.expansion.coefficients[0] == pytest.approx(1 + spec.rho(10.0), rel=1e-14)
        assert g.expansion.coefficients[0].real >= 1.0

    def test_zero_field(self, s2):
        f = random_window_field(s2, 10.0, 2.0, seed=1)
        zero = f.with_expansion(f.expansion.scaled(0.0))
        g = apply_filter(zero, WindowFilterSpec(10.0, 0.3))
        assert np.abs(g.samples).max() == 0.0

    @pytest.mark.parametrize("lam, r", [(0.5, 1.0), (10.0, 0.05), (10.0, 3.5)])
    def test_parameter_range(self, s2, lam, r):
        with pytest.raises(ParameterError):
            apply_filter(zonal_field(s2, 3), WindowFilterSpec(lam, r))

    def test_fejer_multipliers(self):
        spec = WindowFilterSpec(8.0, 0.5, FEJER)
        m = filter_multiplier(spec, [8.0, 8.0 + 2 * math.pi])
        rho = lambda s: np.sinc(s / (2 * math.pi)) ** 2
        np.testing.assert_allclose(m, [1 + rho(8.0), rho(math.pi) + rho(0.5 * (16 + 2 * math.pi))], rtol=1e-14)

    @given(st.floats(1.0, 200.0), st.floats(0.01, 1.0))
    def test_gain_at_least_one(self, lam, frac):
        spec = WindowFilterSpec(lam, max(frac * math.pi, 1 / lam))
        # rho(0) = 1 holds to rounding through the spline cache
        assert filter_multiplier(spec, [lam])[0] >= 1.0 - 1e-14


class TestCluster:
    def test_in_band_identity(self, t2):
        f = torus_wave(t2, (3, 4))
        np.testing.assert_array_equal(cluster_project(f, 5).samples, f.samples)

    def test_disjoint_band(self, t2):
        f = torus_wave(t2, (3, 4))
        assert np.abs(cluster_project(f, 7).samples).max() == 0.0
        assert len(cluster_project(f, 7).expansion) == 0

    @pytest.mark.parametrize("model", [ManifoldModel.sphere(2), ManifoldModel.torus(2)])
    def test_partition_reassembles(self, model):
        f = random_window_field(model, 6.0, 5.0, seed=2)
        parts = [cluster_project(f, k) for k in range(0, 13)]
        total = sum(len(p.expansion) for p in parts)
        assert total == len(f.expansion)
        np.testing.assert_allclose(sum(p.samples for p in parts), f.samples, atol=1e-12)
        coefs = np.concatenate([p.expansion.coefficients for p in parts])
        assert np.sort_complex(coefs) == pytest.approx(np.sort_complex(f.expansion.coefficients))


def _kernel_oracle(spec, d, k_max):
    # direct degree sum with scipy Legendre polynomials and the window's own quadrature
    rho = make_rho(spec.rho_kind)
    ks = np.arange(k_max + 1)
    lams = np.sqrt(ks * (ks + 1.0))
    direct = getattr(rho, "direct", rho)
    mult = direct(spec.r * (spec.lam - lams)) + direct(spec.r * (spec.lam + lams))
    return np.array([np.sum(mult * (2 * ks + 1) / (4 * math.pi) * eval_legendre(ks, math.cos(x))) for x in d])


class TestKernel:
    @pytest.mark.parametrize("lam, lr", [(32, 2), (32, 8), (32, 32), (64, 2), (64, 8), (64, 32)])
    def test_huygens_support(self, s2, lam, lr):
        r = lr / lam
        spec = WindowFilterSpec(lam, r)
        d = np.linspace(1.0001 * r, math.pi, 2000)
        k = kernel_profile(s2, spec, d)
        diag = kernel_profile(s2, spec, [0.0])[0]
        assert diag > 0
        assert np.abs(k).max() <= 1e-3 * diag

    def test_diagonal_against_direct_sum(self, s2):
        spec = WindowFilterSpec(20.0, 0.5)
        k_max = default_k_max(spec)
        d = np.array([0.0, 0.1, 0.3, 0.7])
        np.testing.assert_allclose(kernel_profile(s2, spec, d), _kernel_oracle(spec, d, k_max), rtol=1e-9, atol=1e-9)
        assert _kernel_oracle(spec, [0.0], k_max)[0] > 0

    def test_fejer_kernel_against_direct_sum(self, s2):
        spec = WindowFilterSpec(20.0, 1.0, FEJER)
        d = np.array([0.0, 0.5, 2.0])
        np.testing.assert_allclose(kernel_profile(s2, spec, d, k_max=60, tail_tol=1.0),
                                   _kernel_oracle(spec, d, 60), rtol=1e-12)

    def test_symmetry(self, s2):
        spec = WindowFilterSpec(16.0, 0.4)
        x, y = Point.on_sphere(0.3, 1.0), Point.on_sphere(0.5, 1.2)
        a, b = filter_kernel(s2, spec, x, y), filter_kernel(s2, spec, y, x)
        assert abs(a.value - b.value.conjugate()) <= 1e-10
        assert a.k_max == default_k_max(spec)

    def test_truncation_tail_error(self, s2):
        spec = WindowFilterSpec(32.0, 0.25)
        with pytest.raises(ParameterError):
            kernel_profile(s2, spec, [0.0], k_max=40)

    def test_torus_unsupported(self, t2):
        with pytest.raises(ParameterError):
            kernel_profile(t2, WindowFilterSpec(8.0, 0.5), [0.0])

    def test_k_max_rule(self):
        spec = WindowFilterSpec(32.0, 0.25)
        assert default_k_max(spec) == math.ceil(32 + make_rho().tail_cutoff(1e-12) / 0.25)


class TestProbe:
    def test_sphere_probe_is_normalised_kernel(self, s2):
        spec = WindowFilterSpec(24.0, 0.5)
        c = Point.on_sphere(0.8, 0.3)
        f = kernel_probe(s2, spec, c)
        assert np.sum(f.grid.weights * np.abs(f.samples) ** 2) == pytest.approx(1.0, abs=1e-8)
        d = np.array([0.0, 0.2, 0.45])
        pts = np.array([[math.sin(0.8 + x) * math.cos(0.3), math.sin(0.8 + x) * math.sin(0.3), math.cos(0.8 + x)]
                        for x in d])
        prof = kernel_profile(s2, spec, d)
        vals = f.evaluate(pts).real
        np.testing.assert_allclose(vals / vals[0], prof / prof[0], atol=1e-7)

    def test_torus_probe_peaks_at_centre(self, t2):
        spec = WindowFilterSpec(8.0, 0.5)
        c = Point.on_torus(1.0, 2.0)
        f = kernel_probe(t2, spec, c)
        assert np.sum(f.grid.weights * np.abs(f.samples) ** 2) == pytest.approx(1.0, abs=1e-10)
        i = int(np.argmax(np.abs(f.samples)))
        far = geodesic_distance(t2, c, Point.on_torus(*f.grid.points[i]))
        assert far <= 2 * f.grid.spacing
