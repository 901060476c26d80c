from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import eval_legendre

from eigenloc.errors import ParameterError, ResolutionError
from eigenloc.geometry import (
    ManifoldModel,
    Point,
    TubeSpec,
    build_grid,
    generate_centers,
    geodesic_distance,
)
from eigenloc.harmonics import (
    highest_weight_constant,
    highest_weight_field,
    random_window_field,
    torus_wave,
    zonal_field,
)
from eigenloc.measures import (
    Cap,
    Rectangle,
    Whole,
    ball_masses,
    ball_norm,
    cap_multipliers,
    harmonic_ball_masses,
    l2_ball_norm,
    lp_norm,
    norm_grid,
    parse_exponent,
    qe_statistic,
    region_mass,
    region_volume,
    sup_ball_norm,
    tube_mass,
)

S2 = ManifoldModel.sphere(2)
T2 = ManifoldModel.torus(2)


def _test_matrix():
    return [
        zonal_field(S2, 32),
        zonal_field(S2, 24, pole=Point.on_sphere(1.0, 2.0)),
        highest_weight_field(S2, 32),
        torus_wave(T2, (4, -7)),
        random_window_field(S2, 16.0, 1.0, seed=0),
        random_window_field(T2, 16.0, 1.0, seed=0),
    ]


FIELDS = _test_matrix()


class TestExponent:
    @pytest.mark.parametrize("raw, p", [(2, 2.0), ("6", 6.0), ("inf", math.inf), (math.inf, math.inf)])
    def test_parse(self, raw, p):
        assert parse_exponent(raw) == p

    @pytest.mark.parametrize("raw", [0.5, "nan", -3])
    def test_reject(self, raw):
        with pytest.raises(ParameterError):
            parse_exponent(raw)


class TestLpNorm:
    @pytest.mark.parametrize("p", [1, 2, 3.5, 6, math.inf])
    def test_constant_field(self, s2, p):
        f = zonal_field(s2, 0, grid=build_grid(s2, 8))
        c = 1 / math.sqrt(4 * math.pi)
        expected = c if math.isinf(p) else c * (4 * math.pi) ** (1 / p)
        assert lp_norm(f, p).value == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("f", FIELDS, ids=lambda f: f.label)
    def test_normalised(self, f):
        assert lp_norm(f, 2).value == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize("k", [10, 64])
    def test_zonal_sup_is_pole_value(self, s2, k):
        f = zonal_field(s2, k)
        sup = lp_norm(f, math.inf).value
        assert sup == pytest.approx(math.sqrt((2 * k + 1) / (4 * math.pi)), rel=1e-12)
        # grid-max oracle along a dense meridian, which reaches the pole
        th = np.linspace(0, math.pi, 20001)
        merid = np.column_stack([np.sin(th), np.zeros_like(th), np.cos(th)])
        assert np.abs(f.evaluate(merid)).max() == pytest.approx(sup, rel=1e-12)

    def test_l4_exact_on_norm_grid(self, s2):
        # int |Q|^4 = c_k^4 2 pi int (1-t^2)^(2k) dt
        k = 20
        f = highest_weight_field(s2, k)
        exact = highest_weight_constant(k) ** 4 * 2 * math.pi * quad(lambda t: (1 - t * t) ** (2 * k), -1, 1)[0]
        assert lp_norm(f, 4, norm_grid(f, 4)).value == pytest.approx(exact**0.25, rel=1e-10)

    @pytest.mark.parametrize("f", FIELDS, ids=lambda f: f.label)
    def test_holder_between_exponents(self, f):
        # normalised power means increase with p
        vol = f.model.volume
        vals = [lp_norm(f, p, norm_grid(f, 8)).value * vol ** (-1 / p) for p in (2, 3, 4, 6, 8)]
        assert all(a <= b * (1 + 1e-10) for a, b in zip(vals, vals[1:]))

    @settings(max_examples=25)
    @given(st.floats(1, 20), st.floats(1, 20), st.integers(0, 5))
    def test_power_mean_monotone(self, p, q, i):
        f = FIELDS[i]
        lo, hi = sorted((p, q))
        g = f.grid
        a = lp_norm(f, lo, g).value * g.total ** (-1 / lo)
        b = lp_norm(f, hi, g).value * g.total ** (-1 / hi)
        assert a <= b * (1 + 1e-10)


class TestBallNorm:
    @pytest.mark.parametrize("r", [0.2, 0.3, 1.0, 2.0])
    def test_torus_wave_closed_form(self, t2, r):
        f = torus_wave(t2, (3, 4))
        c = Point.on_torus(0.4, 5.9)
        assert l2_ball_norm(f, c, r).value == pytest.approx(r / (2 * math.sqrt(math.pi)), rel=1e-12)

    def test_torus_inj_ball(self, t2):
        # largest embedded ball: the inscribed disc, mass pi^3 / (4 pi^2) = pi / 4
        f = torus_wave(t2, (1, 1))
        assert l2_ball_norm(f, Point.on_torus(0, 0), math.pi).value ** 2 == pytest.approx(math.pi / 4, rel=1e-12)

    def test_zonal_ball_law(self, s2):
        f = zonal_field(s2, 64)
        rs = [1 / f.lam * 2**j for j in range(6)]
        ratios = [l2_ball_norm(f, s2.north_pole, r).value / math.sqrt(r) for r in rs]
        assert max(ratios) / min(ratios) < 4

    @pytest.mark.parametrize("f", FIELDS, ids=lambda f: f.label)
    def test_monotone_and_bounded(self, f):
        c = Point.on_sphere(0.7, 0.2) if f.model.is_sphere else Point.on_torus(1.0, 2.0)
        rs = [1 / f.lam, 0.2, 0.5, 1.0, 2.0, math.pi]
        vals = [l2_ball_norm(f, c, r).value for r in rs]
        assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))
        assert vals[-1] <= 1 + 1e-8

    def test_sphere_full_ball_is_total(self, s2):
        f = random_window_field(s2, 10.0, 1.0, seed=5)
        assert l2_ball_norm(f, Point.on_sphere(1.0, 1.0), math.pi).value == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("f", FIELDS, ids=lambda f: f.label)
    def test_trivial_bound(self, f):
        rs = [r for r in (1 / f.lam, 0.1, 0.25, 0.5, 1.0, 2.0) if r >= 1 / f.lam]
        centers = generate_centers(f.model, 0.6).points[::7]
        worst = max(ball_masses(f, centers, r, method="quadrature").max() / math.sqrt(r) for r in rs)
        assert worst <= 3

    def test_grid_route_agrees(self, s2):
        f = random_window_field(s2, 12.0, 1.0, seed=3).on_grid(build_grid(s2, 200))
        c = Point.on_sphere(1.3, 0.4)
        a = l2_ball_norm(f, c, 0.8).value
        b = l2_ball_norm(f, c, 0.8, method="grid").value
        assert b == pytest.approx(a, rel=0.05)

    def test_grid_route_below_resolution(self, s2):
        f = zonal_field(s2, 20, grid=build_grid(s2, 21))
        with pytest.raises(ResolutionError):
            l2_ball_norm(f, Point.on_sphere(1.0, 0.0), 0.051, method="grid")

    def test_radius_range(self, s2):
        f = zonal_field(s2, 20)
        with pytest.raises(ParameterError):
            l2_ball_norm(f, s2.north_pole, 0.01)

    @pytest.mark.parametrize("f", FIELDS, ids=lambda f: f.label)
    @pytest.mark.parametrize("r_scale", [1.0, 4.0, 16.0])
    def test_holder_consistency(self, f, r_scale):
        r = min(r_scale / f.lam, f.model.inj)
        c = Point.on_sphere(0.4, 1.0) if f.model.is_sphere else Point.on_torus(0.3, 0.3)
        l2 = l2_ball_norm(f, c, r).value
        l6 = ball_norm(f, c, r, 6).value
        assert l2 <= l6 * f.model.ball_volume(r) ** (1 / 2 - 1 / 6) * 1.01


class TestHarmonicRoute:
    def test_cap_multipliers_oracle(self):
        r = 0.7
        beta = cap_multipliers(30, r)
        oracle = [2 * math.pi * quad(lambda t: eval_legendre(l, t), math.cos(r), 1)[0] for l in range(31)]
        np.testing.assert_allclose(beta, oracle, atol=1e-12)
        assert beta[0] == pytest.approx(2 * math.pi * (1 - math.cos(r)))

    @pytest.mark.parametrize("seed", [0, 1])
    @pytest.mark.parametrize("r", [0.1, 0.5, 2.0])
    def test_two_routes_agree(self, s2, seed, r):
        f = random_window_field(s2, 14.0, 3.0, seed=seed)
        centers = generate_centers(s2, 0.5).points
        np.testing.assert_allclose(harmonic_ball_masses(f, centers, r),
                                   ball_masses(f, centers, r, method="quadrature"), rtol=1e-9, atol=1e-12)

    def test_torus_rejected(self, t2):
        with pytest.raises(ParameterError):
            harmonic_ball_masses(torus_wave(t2, (1, 0)), np.zeros((1, 2)), 0.5)


class TestSupBall:
    def test_torus_constant(self, t2):
        f = torus_wave(t2, (2, 5))
        res = sup_ball_norm(f, 0.5)
        assert np.ptp(res.values) <= 1e-12
        assert res.count == len(generate_centers(t2, 0.25))

    @pytest.mark.parametrize("k, r", [(32, 0.2), (64, 0.1), (64, 0.5)])
    def test_zonal_argmax_at_pole(self, s2, k, r):
        pole = Point.on_sphere(1.2, 0.5)
        f = zonal_field(s2, k, pole=pole)
        res = sup_ball_norm(f, r)
        # |Z| is even under the antipodal map, so the antipode ties with the pole
        d = geodesic_distance(s2, res.argmax, pole)
        assert min(d, math.pi - d) <= r / 2

    @pytest.mark.parametrize("k", [64, 128])
    def test_highest_weight_argmax_near_equator(self, s2, k):
        f = highest_weight_field(s2, k)
        r = f.lam**-0.5
        res = sup_ball_norm(f, r)
        assert abs(math.pi / 2 - math.acos(res.argmax.array[2])) <= r

    def test_spacing_too_coarse(self, s2):
        f = zonal_field(s2, 16)
        with pytest.raises(ParameterError):
            sup_ball_norm(f, 0.3, spacing=0.2)
        with pytest.raises(ParameterError):
            sup_ball_norm(f, 0.3, centers=generate_centers(s2, 0.2))

    def test_lower_bound_improves_with_density(self, s2):
        f = random_window_field(s2, 16.0, 1.0, seed=9)
        coarse = sup_ball_norm(f, 0.4, spacing=0.2).value
        fine = sup_ball_norm(f, 0.4, spacing=0.05).value
        assert fine >= coarse * (1 - 1e-3)


def _q_tube_oracle(k, w):
    return 2 * math.pi * highest_weight_constant(k) ** 2 * quad(lambda t: (1 - t * t) ** k, -math.sin(w), math.sin(w))[0]


def _z_tube_oracle(k, w):
    # a circle at distance d from the pole spends a fraction (2/pi) asin(sin w / sin d) inside the tube
    def dens(d):
        frac = (2 / math.pi) * math.asin(min(1.0, math.sin(w) / max(math.sin(d), 1e-300)))
        return (2 * k + 1) / (4 * math.pi) * eval_legendre(k, math.cos(d)) ** 2 * 2 * math.pi * math.sin(d) * frac
    return quad(dens, 0, math.pi, limit=2000, points=[w, math.pi - w])[0]


class TestTube:
    @pytest.mark.parametrize("k", [64, 128, 256])
    def test_highest_weight_equator(self, s2, k):
        f = highest_weight_field(s2, k)
        w = f.lam**-0.5
        m = tube_mass(f, TubeSpec.equator(w))
        assert m == pytest.approx(_q_tube_oracle(k, w), rel=1e-10)
        assert m >= 0.3

    @pytest.mark.parametrize("k, frozen", [(64, 0.225847435502), (128, 0.172116730616), (256, 0.130510400714)])
    def test_zonal_through_pole(self, s2, k, frozen):
        f = zonal_field(s2, k)
        w = f.lam**-0.5
        m = tube_mass(f, TubeSpec.through(s2.north_pole, (1.0, 0.0, 0.0), w))
        assert m == pytest.approx(frozen, rel=1e-9)
        assert _z_tube_oracle(k, w) == pytest.approx(frozen, rel=1e-9)

    @pytest.mark.parametrize("k", [128, 256])
    def test_zonal_through_pole_small(self, s2, k):
        f = zonal_field(s2, k)
        assert tube_mass(f, TubeSpec.through(s2.north_pole, (1.0, 0.0, 0.0), f.lam**-0.5)) <= 0.2

    @pytest.mark.xfail(strict=True, reason="the zonal tube mass at k = 64 is 0.2258, above the 0.2 bound")
    def test_zonal_through_pole_small_k64(self, s2):
        f = zonal_field(s2, 64)
        assert tube_mass(f, TubeSpec.through(s2.north_pole, (1.0, 0.0, 0.0), f.lam**-0.5)) <= 0.2

    @pytest.mark.parametrize("f", FIELDS[:3] + FIELDS[4:5], ids=lambda f: f.label)
    def test_full_width(self, f):
        assert tube_mass(f, TubeSpec.equator(math.pi / 2)) == pytest.approx(1.0, abs=1e-8)

    def test_torus_rejected(self, t2):
        with pytest.raises(ParameterError):
            tube_mass(torus_wave(t2, (1, 2)), TubeSpec.equator(0.3))


class TestRegions:
    def test_closed_form_volumes(self, s2, t2):
        assert region_volume(s2, Cap(s2.north_pole, 1.0)) == pytest.approx(2 * math.pi * (1 - math.cos(1.0)))
        assert region_volume(t2, Rectangle((0.0, 1.0), (2.0, 1.5))) == pytest.approx(1.0)
        assert region_volume(s2, TubeSpec.equator(0.2)) == pytest.approx(4 * math.pi * math.sin(0.2))
        assert region_volume(s2, Whole()) == pytest.approx(4 * math.pi)

    def test_bad_rectangle(self):
        with pytest.raises(ParameterError):
            Rectangle((1.0, 0.0), (0.5, 1.0))

    def test_quadrature_volumes(self, s2, t2):
        one_s = zonal_field(s2, 0, grid=build_grid(s2, 4))
        one_t = torus_wave(t2, (0, 0))
        for model, f, region in [(s2, one_s, Cap(Point.on_sphere(2.0, 1.0), 0.6)),
                                 (s2, one_s, TubeSpec.equator(0.3)),
                                 (t2, one_t, Rectangle((5.0, 1.0), (7.5, 2.0))),
                                 (t2, one_t, Cap(Point.on_torus(6.0, 0.1), 1.2))]:
            assert region_mass(f, region) * model.volume == pytest.approx(region_volume(model, region), rel=0.02)


class TestQE:
    @pytest.mark.parametrize("region", [
        Cap(Point.on_torus(1.0, 2.0), 0.5),
        Cap(Point.on_torus(6.0, 6.0), 2.5),
        Rectangle((0.5, 0.5), (2.0, 3.0)),
        Rectangle((5.0, 5.0), (7.0, 8.0)),
        Whole(),
    ])
    @pytest.mark.parametrize("m", [(1, 0), (3, 4), (-7, 2)])
    def test_torus_waves_equidistribute(self, t2, region, m):
        assert qe_statistic(torus_wave(t2, m), region) <= 1e-6

    @pytest.mark.parametrize("f", FIELDS, ids=lambda f: f.label)
    def test_whole_manifold(self, f):
        assert qe_statistic(f, Whole()) <= 1e-8

    def test_zonal_polar_cap_witness(self, s2):
        f = zonal_field(s2, 128)
        cap = Cap(s2.north_pole, f.lam**-0.5)
        frac = region_volume(s2, cap) / s2.volume
        stat = qe_statistic(f, cap)
        assert stat > 10 * frac
        # polar mass oracle: 2 pi (2k+1)/(4 pi) int_{cos w}^1 P_k^2
        oracle = 0.5 * 257 * quad(lambda t: eval_legendre(128, t) ** 2, math.cos(cap.radius), 1, limit=500)[0]
        assert stat == pytest.approx(oracle - frac, rel=1e-9)
