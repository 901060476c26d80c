"""Smooth spectral windows and the filter T = rho(r(lam - P)) + rho(r(lam + P)).

The window rho is nonnegative, rho(0) = 1, and its Fourier transform
rho_hat(t) = int rho(s) exp(-i s t) ds vanishes for |t| >= 1.  Two windows are
available:

* ``smooth_bump``: rho = (phi_hat / phi_hat(0))^2 for the even bump
  phi(x) = exp(-a / (1 - (x/h)^2)) on [-h, h], h <= 1/2; rho_hat is
  proportional to phi * phi and so is supported in [-2h, 2h].
* ``fejer``: rho(s) = (sin(s/2) / (s/2))^2 with triangular rho_hat.  Only
  quadratic decay, kept as a closed-form cross-check.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import roots_legendre

from .errors import ParameterError
from .geometry import ManifoldModel, Point, geodesic_distance, point_array, sphere_volume
from .harmonics import (
    FILTERED,
    PROBE,
    EigenfunctionField,
    SpectralExpansion,
    field_from_expansion,
    harmonic_dimension,
    sphere_frequency,
    window_modes,
    zonal_series,
)
from .geometry import QuadratureGrid, build_axial_grid, build_grid

SMOOTH_BUMP = "smooth_bump"
FEJER = "fejer"

_CACHE_DENSITY = 64  # samples per unit of s
_CACHE_LIMIT = 1024.0  # beyond this the window is evaluated directly
_SCAN_LIMIT = 1000.0


@dataclass(frozen=True)
class WindowFilterSpec:
    """Data defining T_{lam, r}: the window and the pair (lam, r)."""

    lam: float
    r: float
    rho_kind: str = SMOOTH_BUMP
    sharpness: float = 1.5
    half_width: float = 0.5

    def __post_init__(self):
        if self.rho_kind not in (SMOOTH_BUMP, FEJER):
            raise ParameterError(f"unknown window kind {self.rho_kind!r}")
        if not self.r > 0:
            raise ParameterError("scale r must be positive")

    @property
    def rho(self) -> "Window":
        return make_rho(self.rho_kind, self.sharpness, self.half_width)


class Window:
    """Evaluator for rho and rho_hat."""

    kind: str

    def __call__(self, s):
        raise NotImplementedError

    def hat(self, t):
        raise NotImplementedError

    def hat_numeric(self, t, s_max: float = 600.0, step: float = 1.0 / 16):
        """rho_hat by trapezoidal quadrature of the Fourier integral of rho."""
        s = np.arange(0.0, s_max + step, step)
        vals = self(s)
        w = np.full(s.size, step)
        w[0] = w[-1] = 0.5 * step
        t = np.atleast_1d(np.asarray(t, dtype=float))
        # rho is even: int rho(s) e^{-ist} ds = 2 int_0^inf rho(s) cos(st) ds
        return 2.0 * (np.cos(np.outer(t, s)) @ (w * vals))

    @functools.cached_property
    def _tail(self) -> tuple[np.ndarray, np.ndarray]:
        s = np.arange(0.0, _SCAN_LIMIT, 1.0 / 8)
        v = np.abs(self(s))
        env = np.maximum.accumulate(v[::-1])[::-1]
        return s, env

    def envelope(self, s0: float) -> float:
        """sup of |rho(s)| over s >= s0 (scanned up to s = 1000)."""
        s, env = self._tail
        if s0 >= s[-1]:
            return float(env[-1])
        return float(env[np.searchsorted(s, max(s0, 0.0))])

    def tail_cutoff(self, tol: float = 1e-12) -> float:
        """Smallest scanned S with |rho(s)| <= tol for every s >= S."""
        s, env = self._tail
        above = np.flatnonzero(env > tol)
        if above.size == 0:
            return 0.0
        if above[-1] == s.size - 1:
            return math.inf
        return float(s[above[-1] + 1])


class SmoothBumpWindow(Window):
    kind = SMOOTH_BUMP

    def __init__(self, sharpness: float = 1.5, half_width: float = 0.5, nodes: int = 1500):
        if not 0 < half_width <= 0.5:
            raise ParameterError("bump support must lie within [-1/2, 1/2]")
        if not sharpness > 0:
            raise ParameterError("bump sharpness must be positive")
        self.sharpness = float(sharpness)
        self.half_width = float(half_width)
        x, w = roots_legendre(nodes)
        self._x = x * half_width
        self._w = w * half_width * self._bump(self._x)
        # same reduction as direct() so that rho(0) == 1 exactly
        self._phi_hat0 = float((np.ones((1, nodes)) @ self._w)[0])
        self._spline = None
        self._range = 0.0

    def _bump(self, x):
        u = (np.asarray(x, float) / self.half_width) ** 2
        out = np.zeros_like(u)
        inside = u < 1.0
        out[inside] = np.exp(-self.sharpness / (1.0 - u[inside]))
        return out

    def direct(self, s):
        """rho(s) from Gauss-Legendre quadrature of the bump's Fourier integral."""
        s = np.abs(np.asarray(s, dtype=float))
        flat = s.ravel()
        out = np.empty(flat.size)
        for i in range(0, flat.size, 4096):
            out[i:i + 4096] = np.cos(np.outer(flat[i:i + 4096], self._x)) @ self._w
        return ((out / self._phi_hat0) ** 2).reshape(s.shape)

    def _ensure(self, s_needed: float) -> None:
        if self._spline is not None and (s_needed <= self._range or self._range >= _CACHE_LIMIT):
            return
        rng = min(_CACHE_LIMIT, max(10.0 + 2.0 * s_needed, 2.0 * self._range, 16.0))
        grid = np.arange(0.0, rng + 1.0 / _CACHE_DENSITY, 1.0 / _CACHE_DENSITY)
        self._spline = CubicSpline(grid, self.direct(grid))
        self._range = float(grid[-1])

    def prepare(self, r: float, lam_max: float) -> None:
        """Build the cache over |s| <= 10 + 4 r lam_max."""
        self._ensure(10.0 + 4.0 * r * lam_max)

    def __call__(self, s):
        s = np.abs(np.asarray(s, dtype=float))
        if s.size == 0:
            return s.copy()
        self._ensure(min(float(s.max()), _CACHE_LIMIT))
        out = np.empty_like(s)
        inside = s <= self._range
        out[inside] = self._spline(s[inside])
        if not inside.all():
            out[~inside] = self.direct(s[~inside])
        out = np.maximum(out, 0.0)
        return out if out.ndim else float(out)

    def hat(self, t):
        """Closed form rho_hat(t) = 2 pi (phi * phi)(t) / phi_hat(0)^2."""
        t = np.atleast_1d(np.abs(np.asarray(t, dtype=float)))
        h = self.half_width
        x, w = roots_legendre(400)
        out = np.zeros(t.shape)
        for i, ti in enumerate(t):
            if ti >= 2 * h:
                continue
            lo, hi = ti - h, h
            xs = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
            out[i] = 0.5 * (hi - lo) * np.sum(w * self._bump(xs) * self._bump(ti - xs))
        return 2.0 * math.pi * out / self._phi_hat0**2


class FejerWindow(Window):
    kind = FEJER

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = np.sinc(s / (2.0 * math.pi)) ** 2
        return out if out.ndim else float(out)

    def hat(self, t):
        t = np.atleast_1d(np.abs(np.asarray(t, dtype=float)))
        return 2.0 * math.pi * np.clip(1.0 - t, 0.0, None)


@functools.lru_cache(maxsize=16)
def make_rho(kind: str = SMOOTH_BUMP, sharpness: float = 1.5, half_width: float = 0.5) -> Window:
    """Window evaluator for the given kind and bump parameters (memoised)."""
    if kind == SMOOTH_BUMP:
        return SmoothBumpWindow(sharpness, half_width)
    if kind == FEJER:
        return FejerWindow()
    raise ParameterError(f"unknown window kind {kind!r}")


def filter_multiplier(spec: WindowFilterSpec, freqs) -> np.ndarray:
    """rho(r(lam - lam_j)) + rho(r(lam + lam_j)) for each frequency lam_j."""
    freqs = np.asarray(freqs, dtype=float)
    rho = spec.rho
    return rho(spec.r * (spec.lam - freqs)) + rho(spec.r * (spec.lam + freqs))


def check_filter_parameters(model: ManifoldModel, lam: float, r: float) -> None:
    if lam < 1.0:
        raise ParameterError("filter needs lam >= 1")
    if r < (1.0 - 1e-12) / lam or r > model.inj * (1 + 1e-12):
        raise ParameterError(f"r = {r:.4g} outside [1/lam, inj] = [{1 / lam:.4g}, {model.inj:.4g}]")


def apply_filter(field: EigenfunctionField, spec: WindowFilterSpec) -> EigenfunctionField:
    """T_{lam, r} applied coefficientwise to the field's expansion."""
    check_filter_parameters(field.model, spec.lam, spec.r)
    mult = filter_multiplier(spec, field.expansion.frequencies)
    return field.with_expansion(field.expansion.scaled(mult), kind=FILTERED,
                                label=f"T[{field.label}]")


def cluster_project(field: EigenfunctionField, k: int) -> EigenfunctionField:
    """Restriction of the expansion to frequencies in [k, k+1); may be zero."""
    f = field.expansion.frequencies
    mask = (f >= k) & (f < k + 1)
    return field.with_expansion(field.expansion.restricted(mask), label=f"chi_{k}[{field.label}]")


def default_k_max(spec: WindowFilterSpec, tol: float = 1e-12) -> int:
    cut = spec.rho.tail_cutoff(tol)
    if not math.isfinite(cut):
        raise ParameterError("window does not reach the truncation tolerance within the scan range")
    return int(math.ceil(spec.lam + cut / spec.r))


def _kernel_coefficients(model: ManifoldModel, spec: WindowFilterSpec, k_max: int,
                         tail_tol: float) -> dict[int, float]:
    n = model.n
    lam_next = sphere_frequency(n, k_max + 1)
    if lam_next > spec.lam and spec.rho.envelope(spec.r * (lam_next - spec.lam)) > tail_tol:
        raise ParameterError(
            f"k_max = {k_max} leaves multipliers above {tail_tol:g} in the truncated tail"
        )
    ks = np.arange(k_max + 1)
    lams = np.sqrt(ks * (ks + n - 1.0))
    mult = filter_multiplier(spec, lams)
    vol = sphere_volume(n)
    return {int(k): float(m * harmonic_dimension(n, int(k)) / vol) for k, m in zip(ks, mult)}


def kernel_profile(model: ManifoldModel, spec: WindowFilterSpec, distances, k_max: int | None = None,
                   tail_tol: float = 1e-10) -> np.ndarray:
    """K_{lam, r} as a function of geodesic distance on the sphere."""
    if not model.is_sphere:
        raise ParameterError("the filter kernel is implemented on the sphere")
    k_max = default_k_max(spec) if k_max is None else int(k_max)
    coefs = _kernel_coefficients(model, spec, k_max, tail_tol)
    d = np.asarray(distances, dtype=float)
    return zonal_series(model.n, coefs, np.cos(d)).real


@dataclass(frozen=True)
class FilterKernelSample:
    x: Point
    y: Point
    value: complex
    k_max: int


def filter_kernel(model: ManifoldModel, spec: WindowFilterSpec, x: Point, y: Point,
                  k_max: int | None = None, tail_tol: float = 1e-10) -> FilterKernelSample:
    """K(x, y) = sum_k [rho(r(lam-lam_k)) + rho(r(lam+lam_k))] (d_k/|S^n|) g_k(cos d(x, y))."""
    k_max = default_k_max(spec) if k_max is None else int(k_max)
    d = geodesic_distance(model, x, y)
    val = kernel_profile(model, spec, np.array([d]), k_max, tail_tol)[0]
    return FilterKernelSample(x, y, complex(val), k_max)


def kernel_probe(model: ManifoldModel, spec: WindowFilterSpec, center: Point | None = None,
                 grid: QuadratureGrid | None = None, tol: float = 1e-8) -> EigenfunctionField:
    """Unit-norm K_{lam,r}(., center): the test function that concentrates T at a point.

    Modes whose multiplier falls below ``tol`` times the largest are dropped.
    On the sphere the probe is a sum of zonal harmonics about ``center``; on
    the torus a sum of waves phased at ``center``.
    """
    cut = spec.rho.tail_cutoff(tol)
    lo, hi = max(0.0, spec.lam - cut / spec.r), spec.lam + cut / spec.r
    if model.is_sphere:
        c = model.north_pole if center is None else center
        pole = point_array(model, c)
        n = model.n
        k_lo = max(0, int(math.floor(lo)) - 1)
        k_hi = int(math.ceil(hi)) + 1
        ks = np.arange(k_lo, k_hi + 1)
        lams = np.sqrt(ks * (ks + n - 1.0))
        mult = filter_multiplier(spec, lams)
        keep = mult > tol * mult.max()
        ks, lams, mult = ks[keep], lams[keep], mult[keep]
        coef = mult * np.sqrt([harmonic_dimension(n, int(k)) for k in ks])
        coef = coef / np.linalg.norm(coef)
        exp = SpectralExpansion(lams, tuple(("Z", int(k)) for k in ks), coef.astype(complex))
        if grid is None:
            res = int(ks.max()) + 1
            north = abs(abs(pole[-1]) - 1.0) < 1e-15
            grid = build_axial_grid(model, res) if north or n > 2 else build_grid(model, res)
        return field_from_expansion(model, exp, spec.lam, grid, PROBE, pole=pole, axis=pole,
                                    label=f"probe_{spec.lam:g}_{spec.r:g}")
    x0 = np.zeros(model.n) if center is None else point_array(model, center)
    freqs, modes = window_modes(model, lo, hi)
    mult = filter_multiplier(spec, freqs)
    keep = mult > tol * mult.max()
    freqs, mult = freqs[keep], mult[keep]
    modes = tuple(m for m, k in zip(modes, keep) if k)
    phase = np.exp(-1j * np.array([m[1:] for m in modes], float) @ x0)
    coef = mult * phase
    coef = coef / np.linalg.norm(coef)
    exp = SpectralExpansion(freqs, modes, coef)
    if grid is None:
        grid = build_grid(model, max(8, 2 * exp.degree_bound + 2))
    return field_from_expansion(model, exp, spec.lam, grid, PROBE,
                                label=f"probe_{spec.lam:g}_{spec.r:g}")
