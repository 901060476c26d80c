"""Norms and statistics of sampled eigenfunction fields.

Whole-manifold norms use quadrature grids.  Ball, cap, tube and rectangle
integrals use local quadrature rules built around the region and evaluate the
field directly at the nodes, so balls far smaller than any global grid
spacing (r = 1/lam at lam ~ 250) are still resolved.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.special import roots_legendre

from .errors import ParameterError, ResolutionError
from .geometry import (
    TWO_PI,
    BallSpec,
    CenterSet,
    ManifoldModel,
    Point,
    QuadratureGrid,
    TubeSpec,
    as_point,
    ball_quadrature,
    build_axial_grid,
    build_grid,
    generate_centers,
    meridian_centers,
    point_array,
    restrict_to_ball,
    tube_quadrature,
)
from .harmonics import EigenfunctionField, SpectralExpansion, legendre_like_eval, legendre_rows, synthesize

WHOLE = "whole"
BALL = "ball"
TUBE = "tube"
RECTANGLE = "rectangle"


def parse_exponent(p) -> float:
    """Accept numbers, ``inf`` and the strings ``"inf"`` / ``"infinity"``."""
    if isinstance(p, str):
        if p.strip().lower() in ("inf", "infinity", "oo"):
            return math.inf
        p = float(p)
    p = float(p)
    if math.isnan(p) or p < 1:
        raise ParameterError(f"exponent p = {p} must be >= 1")
    return p


@dataclass(frozen=True)
class NormReport:
    field_id: str
    lam: float
    p: float
    value: float
    region: str = WHOLE
    center: np.ndarray | None = None
    r: float | None = None
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Cap:
    """Geodesic ball used as a region (a spherical cap, or a disc on the torus)."""

    center: Point
    radius: float

    def volume(self, model: ManifoldModel) -> float:
        return model.ball_volume(self.radius)


@dataclass(frozen=True)
class Rectangle:
    """Coordinate box [lo, hi] on T^2, taken modulo 2 pi."""

    lo: tuple[float, float]
    hi: tuple[float, float]

    def __post_init__(self):
        sides = np.subtract(self.hi, self.lo)
        if len(self.lo) != 2 or np.any(sides <= 0) or np.any(sides > TWO_PI + 1e-12):
            raise ParameterError("rectangle sides must lie in (0, 2 pi]")

    def volume(self, model: ManifoldModel) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))


@dataclass(frozen=True)
class Whole:
    def volume(self, model: ManifoldModel) -> float:
        return model.volume


Region = Union[Cap, Rectangle, TubeSpec, Whole]


def region_volume(model: ManifoldModel, region: Region) -> float:
    """Closed-form |Omega|."""
    if isinstance(region, TubeSpec):
        return region.volume
    return region.volume(model)


def _field_degree(f: EigenfunctionField) -> int:
    if f.model.is_sphere:
        return max(f.degree_bound, 1)
    return max(int(math.ceil(f.frequency_bound)), 1)


def region_quadrature(model: ManifoldModel, region: Region, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights over ``region`` for integrands of the given degree."""
    if isinstance(region, Cap):
        return ball_quadrature(model, point_array(model, region.center), region.radius, degree)
    if isinstance(region, TubeSpec):
        if not model.is_sphere or model.n != 2:
            raise ParameterError("tubes are supported on S^2 only")
        return tube_quadrature(region, degree)
    if isinstance(region, Rectangle):
        if model.is_sphere or model.n != 2:
            raise ParameterError("rectangles are supported on T^2 only")
        axes = []
        for lo, hi in zip(region.lo, region.hi):
            m = math.ceil(degree * (hi - lo)) + 16
            x, w = roots_legendre(m)
            axes.append((0.5 * (hi - lo) * (x + 1.0) + lo, 0.5 * (hi - lo) * w))
        (x0, w0), (x1, w1) = axes
        pts = np.stack(np.meshgrid(x0, x1, indexing="ij"), axis=-1).reshape(-1, 2) % TWO_PI
        return pts, np.outer(w0, w1).ravel()
    if isinstance(region, Whole):
        g = build_grid(model, degree + 1 if model.is_sphere else 2 * degree + 2)
        return g.points, g.weights
    raise ParameterError(f"unsupported region {region!r}")


def _power_mean(values: np.ndarray, weights: np.ndarray, p: float) -> float:
    a = np.abs(values)
    if math.isinf(p):
        return float(a.max()) if a.size else 0.0
    return float(np.sum(weights * a**p) ** (1.0 / p))


def norm_grid(f: EigenfunctionField, p) -> QuadratureGrid:
    """Grid on which the L^p norm of ``f`` is computed without aliasing.

    For finite p the grid integrates |f|^p exactly when p is even (degree
    p/2 * k polynomial in each variable); p = infinity oversamples fourfold.
    Fields symmetric about the north-pole axis get the one-dimensional axial
    grid.
    """
    p = parse_exponent(p)
    k = _field_degree(f)
    factor = 4.0 if math.isinf(p) else max(1.0, p / 2.0)
    if f.model.is_sphere:
        res = max(2, int(math.ceil(factor * k)) + 1)
        if f.axis is not None and abs(abs(f.axis[-1]) - 1.0) < 1e-12:
            return build_axial_grid(f.model, res)
        return build_grid(f.model, res)
    return build_grid(f.model, max(8, int(math.ceil(2 * factor * k)) + 1))


def lp_norm(f: EigenfunctionField, p=2, grid: QuadratureGrid | None = None) -> NormReport:
    """(sum_i w_i |f_i|^p)^(1/p) on ``grid`` (default: the field's own grid).

    p = infinity returns the largest |f_i| over the nodes, together with the
    two points on the symmetry axis when the field has one (the axis carries
    the zonal peak, which no Gauss node hits); it is a lower bound for the
    true supremum.
    """
    p = parse_exponent(p)
    g = f.grid if grid is None else grid
    samples = f.samples if g is f.grid else f.on_grid(g).samples
    value = _power_mean(samples, g.weights, p)
    if math.isinf(p) and f.axis is not None:
        extra = f.evaluate(np.stack([f.axis, -f.axis]))
        value = max(value, float(np.abs(extra).max()))
    return NormReport(f.label, f.lam, p, value, WHOLE, meta={"resolution": g.resolution,
                                                              "layout": g.layout})


def _check_radius(f: EigenfunctionField, r: float) -> None:
    lam = max(f.lam, 1.0)
    if r < (1.0 - 1e-9) / lam or r > f.model.inj * (1 + 1e-12):
        raise ParameterError(f"radius {r:.4g} outside [1/lam, inj] = [{1 / lam:.4g}, {f.model.inj:.4g}]")


def _on_axis(f: EigenfunctionField, c: np.ndarray) -> bool:
    return f.axis is not None and abs(abs(float(f.axis @ c)) - 1.0) < 1e-12


def ball_norm(f: EigenfunctionField, center: Point, r: float, p=2, method: str = "quadrature") -> NormReport:
    """L^p(B_r(center)) norm of ``f``.

    ``method="quadrature"`` integrates with a local rule sized to the field's
    degree; ``method="grid"`` sums the field's own grid nodes inside the ball
    and fails when the ball is below the grid spacing.
    """
    p = parse_exponent(p)
    _check_radius(f, r)
    c = point_array(f.model, center)
    if method == "grid":
        sub = restrict_to_ball(f.grid, BallSpec(center, r))
        vals = f.samples[sub.index]
        w = sub.weights
    elif method == "quadrature":
        deg = _field_degree(f)
        if not math.isinf(p):
            deg = int(math.ceil(deg * max(1.0, p / 2.0)))
        axial = f.model.is_sphere and _on_axis(f, c)
        pts, w = ball_quadrature(f.model, c, r, deg, axial=axial)
        vals = f.evaluate(pts)
    else:
        raise ParameterError(f"unknown method {method!r}")
    return NormReport(f.label, f.lam, p, _power_mean(vals, w, p), BALL, c, float(r))


def l2_ball_norm(f: EigenfunctionField, center: Point, r: float, method: str = "quadrature") -> NormReport:
    return ball_norm(f, center, r, 2, method)


def _reflection_to(c: np.ndarray) -> np.ndarray:
    """Orthogonal matrix sending the north pole to ``c`` (a Householder reflection)."""
    north = np.zeros_like(c)
    north[-1] = 1.0
    v = north - c
    nv = float(v @ v)
    if nv < 1e-30:
        return np.eye(c.size)
    return np.eye(c.size) - 2.0 * np.outer(v, v) / nv


def sphere_harmonic_coefficients(values: np.ndarray, grid: QuadratureGrid, degree: int) -> np.ndarray:
    """Coefficients a[l, m + degree] = int F conj(Y_lm) of samples on a product grid.

    Exact when F is a polynomial of degree <= 2 * grid.resolution - 1 - degree.
    """
    if grid.layout != "product":
        raise ParameterError("harmonic analysis needs a product grid")
    nt, nphi = grid.cos_theta.size, grid.phi.size
    dphi = TWO_PI / nphi
    if degree >= nphi // 2:
        raise ResolutionError("azimuthal resolution too low for the requested degree")
    F = np.asarray(values).reshape(nt, nphi)
    G = np.fft.fft(F, axis=1) * dphi  # G[:, m] = int F e^{-i m phi} dphi
    wt = grid.weights.reshape(nt, nphi)[:, 0] / dphi
    out = np.zeros((degree + 1, 2 * degree + 1), dtype=complex)
    for l, row in legendre_rows(degree, grid.cos_theta):
        rw = row * wt
        m = np.arange(l + 1)
        out[l, degree + m] = np.einsum("mj,jm->m", rw, G[:, m])
        out[l, degree - m[1:]] = np.einsum("mj,jm->m", rw[1:], G[:, nphi - m[1:]])
    return out


def cap_multipliers(degree: int, r: float) -> np.ndarray:
    """2 pi int_{cos r}^1 P_l(t) dt for l = 0..degree (Funk-Hecke weights of a cap on S^2)."""
    x, w = roots_legendre(degree // 2 + 2)
    half_cap = math.sin(0.5 * r) ** 2
    t = 1.0 - half_cap * (1.0 - x)
    wt = half_cap * w
    return np.array([TWO_PI * np.sum(wt * legendre_like_eval(2, l, t)) for l in range(degree + 1)])


def harmonic_ball_masses(f: EigenfunctionField, centers: np.ndarray, r: float) -> np.ndarray:
    """L^2(B_r(c)) norms on S^2 from the spherical harmonic expansion of |f|^2.

    |f|^2 has degree <= 2k, so c -> int_{B_r(c)} |f|^2 is the degree-2k
    series sum_lm beta_l a_lm Y_lm(c) with cap weights beta_l; no quadrature
    over the ball is involved.
    """
    if not f.model.is_sphere or f.model.n != 2:
        raise ParameterError("harmonic ball masses are available on S^2 only")
    k = f.degree_bound
    L = 2 * k
    grid = build_grid(f.model, L + 1)
    dens = np.abs(f.on_grid(grid).samples) ** 2
    a = sphere_harmonic_coefficients(dens, grid, L)
    beta = cap_multipliers(L, r)
    terms = {(l, m): beta[l] * a[l, m + L] for l in range(L + 1) for m in range(-l, l + 1)}
    centers = np.atleast_2d(np.asarray(centers, float))
    exp = SpectralExpansion(np.zeros(len(terms)), tuple(("Y",) + lm for lm in terms),
                            np.array(list(terms.values()), dtype=complex))
    mass = synthesize(f.model, exp, centers).real
    return np.sqrt(np.clip(mass, 0.0, None))


def ball_masses(f: EigenfunctionField, centers: np.ndarray, r: float, batch: int = 2_000_000,
                method: str = "auto") -> np.ndarray:
    """L^2(B_r(c)) norms for many centres.

    ``method="quadrature"`` shares one local rule: on the sphere the rule at
    the north pole is reflected onto each centre, on the torus it is
    translated.  ``method="harmonic"`` uses :func:`harmonic_ball_masses`
    (S^2 only).  ``"auto"`` picks the harmonic route for S^2 fields without
    a symmetry axis and the quadrature route otherwise.
    """
    _check_radius(f, r)
    if method == "auto":
        use_harmonic = f.model.is_sphere and f.model.n == 2 and f.axis is None
        method = "harmonic" if use_harmonic else "quadrature"
    if method == "harmonic":
        return harmonic_ball_masses(f, centers, r)
    if method != "quadrature":
        raise ParameterError(f"unknown method {method!r}")
    model = f.model
    centers = np.atleast_2d(np.asarray(centers, float))
    deg = _field_degree(f)
    if model.is_sphere:
        if model.n != 2:
            raise ParameterError("batched ball masses are available on S^2 only")
        north = model.north_pole.array
        pts0, w = ball_quadrature(model, north, r, deg)
    else:
        pts0, w = ball_quadrature(model, np.zeros(model.n), r, deg)
    per = max(1, batch // pts0.shape[0])
    out = np.empty(centers.shape[0])
    for s in range(0, centers.shape[0], per):
        block = centers[s:s + per]
        if model.is_sphere:
            mats = np.stack([_reflection_to(c) for c in block])
            pts = np.einsum("bij,qj->bqi", mats, pts0)
        else:
            pts = (block[:, None, :] + pts0[None, :, :]) % TWO_PI
        vals = f.evaluate(pts.reshape(-1, model.point_dim)).reshape(block.shape[0], -1)
        out[s:s + per] = np.sqrt(np.abs(vals) ** 2 @ w)
    return out


@dataclass(frozen=True, eq=False)
class SupBallResult:
    """Maximum of ||f||_{L^2(B_r(c))} over a centre set (a lower bound of the sup over M)."""

    value: float
    argmax: Point
    r: float
    spacing: float
    count: int
    values: np.ndarray
    centers: np.ndarray


def sup_ball_norm(f: EigenfunctionField, r: float, centers: CenterSet | None = None,
                  spacing: float | None = None, method: str = "auto") -> SupBallResult:
    """max_c ||f||_{L^2(B_r(c))} over centres with spacing <= r/2.

    When the field's modulus is symmetric about an axis, the default centre
    set is a meridian, since every ball is congruent to one centred there.
    """
    model = f.model
    if centers is None:
        spacing = 0.5 * r if spacing is None else spacing
        if spacing > 0.5 * r * (1 + 1e-9):
            raise ParameterError(f"centre spacing {spacing:.4g} exceeds r/2 = {0.5 * r:.4g}")
        if model.is_sphere and f.axis is not None:
            centers = meridian_centers(model, f.axis, spacing)
        else:
            centers = generate_centers(model, spacing)
    elif centers.spacing > 0.5 * r * (1 + 1e-9):
        raise ParameterError(f"centre spacing {centers.spacing:.4g} exceeds r/2 = {0.5 * r:.4g}")
    vals = ball_masses(f, centers.points, r, method=method)
    i = int(np.argmax(vals))
    return SupBallResult(float(vals[i]), as_point(model, centers.points[i]), float(r),
                         float(centers.spacing), len(centers), vals, centers.points)


def region_mass(f: EigenfunctionField, region: Region) -> float:
    """int_Omega |f|^2 dV."""
    if isinstance(region, Whole):
        return float(np.sum(f.grid.weights * np.abs(f.samples) ** 2))
    pts, w = region_quadrature(f.model, region, _field_degree(f))
    return float(np.sum(w * np.abs(f.evaluate(pts)) ** 2))


def tube_mass(f: EigenfunctionField, tube: TubeSpec) -> float:
    """int over the tube of |f|^2; sphere only."""
    if not f.model.is_sphere or f.model.n != 2:
        raise ParameterError("tube masses are defined on S^2")
    if tube.width <= 0:
        raise ResolutionError("tube width must be positive")
    return region_mass(f, tube)


def qe_statistic(f: EigenfunctionField, region: Region) -> float:
    """|int_Omega |f|^2 - |Omega|/|M||."""
    return abs(region_mass(f, region) - region_volume(f.model, region) / f.model.volume)
