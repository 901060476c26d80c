"""Manifold models, geodesic distance, quadrature grids and centre sets.

Two model manifolds are supported: the unit round sphere S^n embedded in
R^(n+1) and the flat torus T^n = R^n / (2 pi Z)^n.  Points on the sphere are
carried as unit vectors; points on the torus as coordinates in [0, 2 pi)^n.
Everything here is immutable and side-effect free.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy.special import gammaln, roots_jacobi, roots_legendre

from .errors import DimensionError, ParameterError, ResolutionError

SPHERE = "sphere"
TORUS = "torus"
TWO_PI = 2.0 * math.pi

# Empirical covering radius of the spherical Fibonacci lattice is about
# 2.73 / sqrt(N); 3.0 leaves a margin near the poles.
_FIBONACCI_COVER_CONST = 3.0
DEFAULT_CENTER_CAP = 250_000


def sphere_volume(n: int) -> float:
    """Surface measure of the unit sphere S^n in R^(n+1)."""
    return float(2.0 * math.exp(0.5 * (n + 1) * math.log(math.pi) - gammaln(0.5 * (n + 1))))


def unit_ball_volume(n: int) -> float:
    return float(math.exp(0.5 * n * math.log(math.pi) - gammaln(0.5 * n + 1.0)))


@dataclass(frozen=True)
class ManifoldModel:
    """A round sphere S^n or a flat torus T^n of side 2 pi."""

    kind: str
    n: int = 2

    def __post_init__(self):
        if self.kind not in (SPHERE, TORUS):
            raise ParameterError(f"unknown model kind {self.kind!r}")
        if int(self.n) != self.n or self.n < 2:
            raise ParameterError("dimension n must be an integer >= 2")

    @classmethod
    def sphere(cls, n: int = 2) -> "ManifoldModel":
        return cls(SPHERE, n)

    @classmethod
    def torus(cls, n: int = 2) -> "ManifoldModel":
        return cls(TORUS, n)

    @property
    def is_sphere(self) -> bool:
        return self.kind == SPHERE

    @property
    def volume(self) -> float:
        if self.is_sphere:
            return sphere_volume(self.n)
        return TWO_PI**self.n

    @property
    def inj(self) -> float:
        return math.pi

    @property
    def point_dim(self) -> int:
        """Length of the array representation of a point."""
        return self.n + 1 if self.is_sphere else self.n

    @property
    def north_pole(self) -> "Point":
        if not self.is_sphere:
            raise ParameterError("the torus has no pole")
        v = np.zeros(self.n + 1)
        v[-1] = 1.0
        return Point.from_embedded(v)

    def ball_volume(self, r: float) -> float:
        """Measure of a geodesic ball of radius r <= inj."""
        if self.is_sphere:
            if self.n == 2:
                return TWO_PI * (1.0 - math.cos(r)) if r < math.pi else 4.0 * math.pi
            x, w = roots_legendre(64)
            th = 0.5 * min(r, math.pi) * (x + 1.0)
            return sphere_volume(self.n - 1) * 0.5 * min(r, math.pi) * float(
                np.sum(w * np.sin(th) ** (self.n - 1))
            )
        return unit_ball_volume(self.n) * r**self.n


def _angles_to_unit(angles: Sequence[float]) -> np.ndarray:
    # Recursive hyperspherical chart: last coordinate is cos(first angle).
    if len(angles) == 1:
        return np.array([math.cos(angles[0]), math.sin(angles[0])])
    a = angles[0]
    rest = _angles_to_unit(angles[1:])
    return np.concatenate([math.sin(a) * rest, [math.cos(a)]])


def _unit_to_angles(v: np.ndarray) -> tuple[float, ...]:
    if v.size == 2:
        return (math.atan2(v[1], v[0]) % TWO_PI,)
    a = math.atan2(float(np.linalg.norm(v[:-1])), float(v[-1]))
    head = v[:-1]
    nh = np.linalg.norm(head)
    if nh == 0.0:
        head = np.zeros_like(head)
        head[0] = 1.0
        nh = 1.0
    return (a,) + _unit_to_angles(head / nh)


@dataclass(frozen=True)
class Point:
    """A point of a model manifold.

    ``coords`` are intrinsic coordinates: (colatitude, azimuths...) on the
    sphere, (x_1, ..., x_n) in [0, 2 pi) on the torus.  ``embedded`` is the
    unit vector in R^(n+1) for sphere points and ``None`` for torus points.
    """

    coords: tuple[float, ...]
    embedded: tuple[float, ...] | None = None

    @classmethod
    def on_sphere(cls, theta: float, *azimuths: float) -> "Point":
        if not 0.0 <= theta <= math.pi:
            raise ParameterError("colatitude must lie in [0, pi]")
        az = tuple(float(a) for a in azimuths) or (0.0,)
        v = _angles_to_unit((float(theta),) + az)
        return cls(tuple(_unit_to_angles(v)), tuple(float(c) for c in v))

    @classmethod
    def from_embedded(cls, v) -> "Point":
        v = np.asarray(v, dtype=float)
        nv = np.linalg.norm(v)
        if v.ndim != 1 or v.size < 3 or nv == 0.0:
            raise DimensionError("embedded sphere points need a nonzero vector in R^(n+1), n >= 2")
        v = v / nv
        return cls(tuple(_unit_to_angles(v)), tuple(float(c) for c in v))

    @classmethod
    def on_torus(cls, *coords: float) -> "Point":
        if len(coords) < 2:
            raise DimensionError("torus points need at least two coordinates")
        return cls(tuple(float(c) % TWO_PI for c in coords), None)

    @property
    def on_sphere_model(self) -> bool:
        return self.embedded is not None

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.embedded if self.embedded is not None else self.coords, dtype=float)


def point_array(model: ManifoldModel, x: Point) -> np.ndarray:
    """Array representation of ``x``, checked against ``model``."""
    if model.is_sphere:
        if x.embedded is None or len(x.embedded) != model.n + 1:
            raise DimensionError(f"point is not on S^{model.n}")
    elif x.embedded is not None or len(x.coords) != model.n:
        raise DimensionError(f"point is not on T^{model.n}")
    return x.array


def as_point(model: ManifoldModel, v: np.ndarray) -> Point:
    return Point.from_embedded(v) if model.is_sphere else Point.on_torus(*v)


def pairwise_distance(model: ManifoldModel, x: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Geodesic distance from the array point ``x`` to each row of ``ys``."""
    ys = np.atleast_2d(ys)
    if model.is_sphere:
        # 2 atan2(|x-y|, |x+y|) equals arccos(x.y) but keeps precision near 0 and pi.
        a = np.linalg.norm(ys - x, axis=1)
        b = np.linalg.norm(ys + x, axis=1)
        return 2.0 * np.arctan2(a, b)
    d = np.abs(ys - x) % TWO_PI
    d = np.minimum(d, TWO_PI - d)
    return np.sqrt(np.sum(d * d, axis=1))


def geodesic_distance(model: ManifoldModel, x: Point, y: Point) -> float:
    """Geodesic distance between two points of ``model``.

    On the sphere this is the great-circle angle; on the torus the minimum
    Euclidean distance over lattice translates.
    """
    return float(pairwise_distance(model, point_array(model, x), point_array(model, y)[None, :])[0])


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Quadrature nodes and positive weights on a model.

    Layouts: ``"product"`` (sphere n=2, Gauss-Legendre in cos(theta) times a
    uniform azimuth), ``"axial"`` (one azimuth, weights carry the full
    rotational measure; valid for integrands symmetric about the north-pole
    axis), ``"uniform"`` (torus product grid) and ``"subset"`` (a restriction
    of another grid, with ``index`` pointing into the parent).
    """

    model: ManifoldModel
    points: np.ndarray
    weights: np.ndarray
    exactness_degree: int
    resolution: int
    layout: str
    spacing: float
    cos_theta: np.ndarray | None = None
    phi: np.ndarray | None = None
    index: np.ndarray | None = None
    parent_layout: str | None = None

    def __len__(self) -> int:
        return self.weights.size

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    @property
    def axial(self) -> bool:
        return self.layout == "axial" or self.parent_layout == "axial"

    @property
    def nodes(self) -> list[Point]:
        return [as_point(self.model, p) for p in self.points]


def _sphere_product_grid(model: ManifoldModel, res: int) -> QuadratureGrid:
    t, wt = roots_legendre(res)
    t = t[::-1].copy()  # theta increasing
    wt = wt[::-1].copy()
    nphi = 2 * res
    phi = np.arange(nphi) * (TWO_PI / nphi)
    st = np.sqrt(np.clip(1.0 - t * t, 0.0, None))
    pts = np.empty((res, nphi, 3))
    pts[..., 0] = st[:, None] * np.cos(phi)[None, :]
    pts[..., 1] = st[:, None] * np.sin(phi)[None, :]
    pts[..., 2] = t[:, None]
    w = np.repeat(wt * (TWO_PI / nphi), nphi)
    return QuadratureGrid(
        model, pts.reshape(-1, 3), w, 2 * res - 1, res, "product", math.pi / res,
        cos_theta=t, phi=phi,
    )


def build_axial_grid(model: ManifoldModel, resolution: int) -> QuadratureGrid:
    """One-dimensional colatitude quadrature for integrands symmetric about the axis.

    Nodes are Gauss-Jacobi in cos(theta) with weight (sin theta)^(n-2), which
    together with the |S^(n-1)| factor realises the (sin theta)^(n-1) measure.
    """
    if not model.is_sphere:
        raise ParameterError("axial grids exist only on the sphere")
    if resolution < 2:
        raise ResolutionError("resolution must be >= 2")
    n = model.n
    if n == 2:
        t, wt = roots_legendre(resolution)
    else:
        a = 0.5 * (n - 2)
        t, wt = roots_jacobi(resolution, a, a)
    t = t[::-1].copy()
    wt = wt[::-1].copy() * sphere_volume(n - 1)
    st = np.sqrt(np.clip(1.0 - t * t, 0.0, None))
    pts = np.zeros((resolution, n + 1))
    pts[:, 0] = st
    pts[:, -1] = t
    return QuadratureGrid(
        model, pts, wt, 2 * resolution - 1, resolution, "axial", math.pi / resolution,
        cos_theta=t,
    )


def build_grid(model: ManifoldModel, resolution: int) -> QuadratureGrid:
    """Quadrature grid for ``model``.

    Sphere n=2: ``resolution`` Gauss-Legendre nodes in cos(theta) times
    ``2*resolution`` azimuths, exact for polynomials of degree
    ``2*resolution - 1``.  Sphere n>2: the axial grid.  Torus: ``resolution``
    equispaced nodes per axis with equal weights (exact for trigonometric
    polynomials of degree < resolution).
    """
    if int(resolution) != resolution or resolution < 2:
        raise ResolutionError("resolution must be an integer >= 2")
    resolution = int(resolution)
    if model.is_sphere:
        if model.n == 2:
            return _sphere_product_grid(model, resolution)
        return build_axial_grid(model, resolution)
    h = TWO_PI / resolution
    axes = [np.arange(resolution) * h] * model.n
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    w = np.full(pts.shape[0], h**model.n)
    return QuadratureGrid(model, pts, w, resolution - 1, resolution, "uniform", h)


def subgrid(grid: QuadratureGrid, mask: np.ndarray) -> QuadratureGrid:
    idx = np.flatnonzero(mask)
    parent_idx = grid.index[idx] if grid.index is not None else idx
    return QuadratureGrid(
        grid.model, grid.points[idx], grid.weights[idx], grid.exactness_degree,
        grid.resolution, "subset", grid.spacing, index=parent_idx,
        parent_layout=grid.parent_layout or grid.layout,
    )


@dataclass(frozen=True)
class BallSpec:
    center: Point
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ParameterError("ball radius must be positive")


@dataclass(frozen=True)
class TubeSpec:
    """Tube of half-width ``width`` about the great circle spanned by ``u``, ``v``."""

    u: tuple[float, ...]
    v: tuple[float, ...]
    width: float

    def __post_init__(self):
        u, v = np.asarray(self.u, float), np.asarray(self.v, float)
        if u.shape != (3,) or v.shape != (3,):
            raise DimensionError("tubes are supported on S^2 only")
        if abs(u @ u - 1) > 1e-12 or abs(v @ v - 1) > 1e-12 or abs(u @ v) > 1e-12:
            raise ParameterError("tube plane must be given by an orthonormal pair")
        if not 0 < self.width <= math.pi:
            raise ParameterError("tube width must lie in (0, inj]")

    @classmethod
    def equator(cls, width: float) -> "TubeSpec":
        return cls((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), width)

    @classmethod
    def through(cls, point: Point, direction, width: float) -> "TubeSpec":
        """Tube about the great circle through ``point`` with tangent ``direction``."""
        p = np.asarray(point.embedded, float)
        d = np.asarray(direction, float)
        d = d - (d @ p) * p
        nd = np.linalg.norm(d)
        if nd == 0:
            raise ParameterError("direction must not be parallel to the point")
        return cls(tuple(p), tuple(d / nd), width)

    @property
    def normal(self) -> np.ndarray:
        return np.cross(np.asarray(self.u, float), np.asarray(self.v, float))

    @property
    def volume(self) -> float:
        return 4.0 * math.pi * math.sin(min(self.width, math.pi / 2))


def _check_ball(model: ManifoldModel, r: float) -> None:
    if not 0 < r <= model.inj * (1 + 1e-12):
        raise ParameterError(f"ball radius {r} outside (0, inj]")


def restrict_to_ball(grid: QuadratureGrid, ball: BallSpec) -> QuadratureGrid:
    """Nodes of ``grid`` within geodesic distance ``ball.radius`` of the centre.

    Weights are kept as they are, so the measure of the restriction carries
    an error of order grid spacing / radius from cells cut by the boundary.
    """
    model = grid.model
    _check_ball(model, ball.radius)
    c = point_array(model, ball.center)
    if ball.radius < grid.spacing:
        raise ResolutionError(
            f"ball radius {ball.radius:.3g} is below the grid spacing {grid.spacing:.3g}"
        )
    if grid.axial:
        if abs(abs(c[-1]) - 1.0) > 1e-12:
            raise ParameterError("axial grids support balls centred on the axis only")
    d = pairwise_distance(model, c, grid.points)
    mask = d <= ball.radius * (1 + 1e-12)
    if not mask.any():
        raise ResolutionError("ball contains no grid nodes")
    return subgrid(grid, mask)


def distance_to_great_circle(tube: TubeSpec, pts: np.ndarray) -> np.ndarray:
    return np.arcsin(np.clip(np.abs(pts @ tube.normal), 0.0, 1.0))


def restrict_to_tube(grid: QuadratureGrid, tube: TubeSpec) -> QuadratureGrid:
    model = grid.model
    if not model.is_sphere or model.n != 2:
        raise ParameterError("tubes are supported on S^2 only")
    if tube.width < grid.spacing:
        raise ResolutionError(f"tube width {tube.width:.3g} is below the grid spacing")
    if grid.axial and abs(abs(tube.normal[-1]) - 1.0) > 1e-12:
        raise ParameterError("axial grids support the equatorial tube only")
    mask = distance_to_great_circle(tube, grid.points) <= tube.width * (1 + 1e-12)
    if not mask.any():
        raise ResolutionError("tube contains no grid nodes")
    return subgrid(grid, mask)


def fibonacci_sphere(count: int) -> np.ndarray:
    i = np.arange(count) + 0.5
    z = 1.0 - 2.0 * i / count
    phi = math.pi * (3.0 - math.sqrt(5.0)) * i
    rho = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)


@dataclass(frozen=True, eq=False)
class CenterSet:
    """Deterministic centre points with a guaranteed covering radius ``spacing``."""

    model: ManifoldModel
    points: np.ndarray
    spacing: float
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.points.shape[0]

    def __iter__(self) -> Iterator[Point]:
        for p in self.points:
            yield as_point(self.model, p)

    def __getitem__(self, i: int) -> Point:
        return as_point(self.model, self.points[i])


def generate_centers(model: ManifoldModel, spacing: float, cap: int = DEFAULT_CENTER_CAP) -> CenterSet:
    """Centres such that every point of the model lies within ``spacing`` of one.

    Sphere (n=2): a Fibonacci lattice with ceil((3/spacing)^2) points, at
    least two.  Torus: the cubic lattice of step 2 pi / ceil(2 pi / spacing);
    its covering radius is step * sqrt(n) / 2, within ``spacing`` for n <= 4.
    """
    if not 0 < spacing <= model.inj * (1 + 1e-12):
        raise ParameterError("spacing must lie in (0, inj]")
    if model.is_sphere:
        if model.n != 2:
            raise ParameterError("centre sets on S^n are available for n = 2 only")
        count = max(2, math.ceil((_FIBONACCI_COVER_CONST / spacing) ** 2))
        if count > cap:
            raise ResolutionError(f"{count} centres exceed the cap of {cap}")
        return CenterSet(model, fibonacci_sphere(count), spacing, {"lattice": "fibonacci"})
    if model.n > 4:
        raise ParameterError("torus lattices cover within `spacing` only for n <= 4")
    m = math.ceil(TWO_PI / spacing - 1e-9)
    count = m**model.n
    if count > cap:
        raise ResolutionError(f"{count} centres exceed the cap of {cap}")
    axes = [np.arange(m) * (TWO_PI / m)] * model.n
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=1)
    return CenterSet(model, pts, spacing, {"lattice": "cubic", "per_axis": m})


def meridian_centers(model: ManifoldModel, axis: np.ndarray, spacing: float) -> CenterSet:
    """Centres along a half great circle from ``axis`` to ``-axis``.

    For a field whose modulus is invariant under rotations about ``axis``
    every ball is congruent to one centred on this meridian.
    """
    axis = np.asarray(axis, float)
    e = np.zeros_like(axis)
    e[int(np.argmin(np.abs(axis)))] = 1.0
    e = e - (e @ axis) * axis
    e /= np.linalg.norm(e)
    count = math.ceil(math.pi / spacing) + 1
    th = np.linspace(0.0, math.pi, count)
    pts = np.cos(th)[:, None] * axis[None, :] + np.sin(th)[:, None] * e[None, :]
    return CenterSet(model, pts, spacing, {"lattice": "meridian"})


def _frame(c: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the tangent space at the unit vector ``c``."""
    m = np.eye(c.size) - np.outer(c, c)
    u, s, _ = np.linalg.svd(m)
    return u[:, : c.size - 1]


def ball_quadrature(model: ManifoldModel, center: np.ndarray, r: float, degree: int,
                    axial: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights integrating band-limited functions over B_r(center).

    Sphere: Gauss-Legendre in cos(d) on [cos r, 1] times a uniform angle
    about the centre; the measure of the cap is reproduced exactly and the
    rule is exact for |f|^2 when f has degree <= ``degree`` once the node
    counts reach degree+1 and 2*degree+2.  ``axial=True`` uses a single
    angle, valid for integrands symmetric about the centre.  Torus (n=2):
    Gauss-Legendre in rho^2 on [0, r^2] times a uniform angle.
    """
    _check_ball(model, r)
    degree = max(int(math.ceil(degree)), 1)
    center = np.asarray(center, float)
    if model.is_sphere:
        r = min(r, math.pi)
        nr = min(degree + 1, math.ceil(degree * r) + 12)
        x, w = roots_legendre(nr)
        # one_minus_t = 1 - cos(d), evaluated without cancellation
        half_cap = math.sin(0.5 * r) ** 2
        one_minus_t = half_cap * (1.0 - x)
        sin_d = np.sqrt(one_minus_t * (2.0 - one_minus_t))
        t = 1.0 - one_minus_t
        wr = half_cap * w
        if axial:
            tan = _frame(center)[:, 0]
            pts = t[:, None] * center[None, :] + sin_d[:, None] * tan[None, :]
            return pts, wr * sphere_volume(model.n - 1) * sin_d ** (model.n - 2)
        if model.n != 2:
            raise ParameterError("non-axial ball quadrature is available on S^2 only")
        sin_max = 1.0 if r >= math.pi / 2 else math.sin(r)
        na = min(2 * degree + 2, math.ceil(2 * degree * sin_max) + 16)
        psi = np.arange(na) * (TWO_PI / na)
        fr = _frame(center)
        dirs = np.cos(psi)[:, None] * fr[:, 0] + np.sin(psi)[:, None] * fr[:, 1]
        pts = t[:, None, None] * center[None, None, :] + sin_d[:, None, None] * dirs[None, :, :]
        wts = np.repeat(wr * (TWO_PI / na), na)
        return pts.reshape(-1, 3), wts
    if model.n != 2:
        raise ParameterError("ball quadrature on the torus is available for n = 2 only")
    nr = math.ceil(degree * r) + 12
    x, w = roots_legendre(nr)
    u = 0.5 * r * r * (x + 1.0)
    rho = np.sqrt(u)
    wr = 0.25 * r * r * w  # (1/2) du from rho d rho, times the map to [-1, 1]
    na = math.ceil(2 * degree * r) + 16
    psi = np.arange(na) * (TWO_PI / na)
    off = rho[:, None, None] * np.stack([np.cos(psi), np.sin(psi)], axis=1)[None, :, :]
    pts = (center[None, None, :] + off) % TWO_PI
    wts = np.repeat(wr * (TWO_PI / na), na)
    return pts.reshape(-1, 2), wts


def tube_quadrature(tube: TubeSpec, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights over the tube about a great circle of S^2.

    Uses the coordinates (arc angle alpha, u = sin of signed distance), in
    which the area element is du d(alpha).
    """
    degree = max(int(math.ceil(degree)), 1)
    w_eff = min(tube.width, math.pi / 2)
    su = math.sin(w_eff)
    nu = min(degree + 1, math.ceil(degree * w_eff) + 12)
    x, w = roots_legendre(nu)
    u = su * x
    wu = su * w
    na = 2 * degree + 2
    alpha = np.arange(na) * (TWO_PI / na)
    uu, vv, nn = np.asarray(tube.u), np.asarray(tube.v), tube.normal
    circ = np.cos(alpha)[:, None] * uu + np.sin(alpha)[:, None] * vv
    cos_d = np.sqrt(np.clip(1.0 - u * u, 0.0, None))
    pts = cos_d[:, None, None] * circ[None, :, :] + u[:, None, None] * nn[None, None, :]
    wts = np.repeat(wu * (TWO_PI / na), na)
    return pts.reshape(-1, 3), wts
