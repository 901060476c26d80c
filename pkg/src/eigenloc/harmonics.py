"""Model eigenfunctions on S^n and T^n.

Fields carry a finite spectral expansion over orthonormal eigenfunctions and
their samples on a quadrature grid.  Mode identifiers are tuples whose first
entry names the basis family:

``("Y", k, m)``
    complex orthonormal spherical harmonic of degree k and order m on S^2
``("Z", k)``
    L^2-normalised zonal harmonic of degree k about the field's pole (any n)
``("Q", k)``
    L^2-normalised highest weight harmonic c_k (x_1 + i x_2)^k on S^2
``("W", m_1, ..., m_n)``
    torus wave (2 pi)^(-n/2) exp(i m.x)

Modes of different degree (or distinct lattice vectors) are orthogonal, so a
unit coefficient vector always describes a unit-norm field.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.special import gammaln, roots_legendre

from .errors import ParameterError, ResolutionError
from .geometry import (
    ManifoldModel,
    Point,
    QuadratureGrid,
    build_axial_grid,
    build_grid,
    point_array,
    sphere_volume,
)

ZONAL = "zonal"
HIGHEST_WEIGHT = "highest_weight"
TORUS_WAVE = "torus_wave"
RANDOM_WINDOW = "random_window"
FILTERED = "filtered"
PROBE = "kernel_probe"

_CHUNK = 65536


def harmonic_dimension(n: int, k: int) -> int:
    """Dimension of the degree-k spherical harmonics on S^n."""
    if k < 0:
        raise ParameterError("degree must be >= 0")
    if k < 2:
        return 1 if k == 0 else n + 1
    return math.comb(k + n, n) - math.comb(k + n - 2, n)


def sphere_frequency(n: int, k: int) -> float:
    return math.sqrt(k * (k + n - 1))


def _check_unit_interval(t: np.ndarray) -> np.ndarray:
    if np.any(np.abs(t) > 1.0 + 1e-12):
        raise ParameterError("argument must lie in [-1, 1]")
    return np.clip(t, -1.0, 1.0)


def legendre_like_eval(n: int, k: int, t):
    """Gegenbauer polynomial C_k^((n-1)/2)(t) / C_k^((n-1)/2)(1).

    Evaluated with the three-term recurrence in its normalised form,
    g_(j+1) = ((2j+n-1) t g_j - j g_(j-1)) / (j+n-1), whose iterates stay in
    [-1, 1].  For n = 2 this is the Legendre polynomial P_k.
    """
    if k < 0:
        raise ParameterError("degree must be >= 0")
    t = _check_unit_interval(np.asarray(t, dtype=float))
    g_prev = np.ones_like(t)
    if k == 0:
        return g_prev if g_prev.ndim else float(g_prev)
    g = t.copy()
    for j in range(1, k):
        g_prev, g = g, ((2 * j + n - 1) * t * g - j * g_prev) / (j + n - 1)
    return g if g.ndim else float(g)


def zonal_series(n: int, coefficients: dict[int, complex], t: np.ndarray) -> np.ndarray:
    """Sum over k of coefficients[k] * g_k(t) with one recurrence pass."""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape, dtype=complex)
    if not coefficients:
        return out
    kmax = max(coefficients)
    g_prev = np.ones_like(t)
    if 0 in coefficients:
        out += coefficients[0] * g_prev
    if kmax == 0:
        return out
    g = t.copy()
    if 1 in coefficients:
        out += coefficients[1] * g
    for j in range(1, kmax):
        g_prev, g = g, ((2 * j + n - 1) * t * g - j * g_prev) / (j + n - 1)
        c = coefficients.get(j + 1)
        if c is not None:
            out += c * g
    return out


def legendre_rows(kmax: int, t: np.ndarray):
    """Yield (l, P) for l = 0..kmax with P[m] the orthonormal associated Legendre
    function of degree l and order m = 0..l at ``t = cos(theta)``.

    Normalised so that P[m](cos theta) exp(i m phi) has unit L^2 norm on S^2.
    No Condon-Shortley phase.
    """
    t = np.asarray(t, dtype=float)
    s = np.sqrt(np.clip(1.0 - t * t, 0.0, None))
    diag = np.full((1,) + t.shape, 1.0 / math.sqrt(4.0 * math.pi))
    prev2 = None
    prev1 = diag
    yield 0, prev1
    for l in range(1, kmax + 1):
        cur = np.empty((l + 1,) + t.shape)
        if l >= 2:
            m = np.arange(l - 1)
            a_l = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            a_lm1 = np.sqrt((4.0 * (l - 1) ** 2 - 1.0) / ((l - 1) ** 2 - m * m))
            shape = (-1,) + (1,) * t.ndim
            cur[: l - 1] = a_l.reshape(shape) * (
                t * prev1[: l - 1] - prev2[: l - 1] / a_lm1.reshape(shape)
            )
        cur[l - 1] = math.sqrt(2 * l + 1) * t * prev1[l - 1]
        cur[l] = math.sqrt((2 * l + 1) / (2 * l)) * s * prev1[l - 1]
        prev2, prev1 = prev1, cur
        yield l, cur


def highest_weight_constant(k: int) -> float:
    """c_k with int_{S^2} |c_k (x_1 + i x_2)^k|^2 = 1, by an exact Gauss rule.

    |x_1 + i x_2|^(2k) = (1 - t^2)^k is a polynomial of degree 2k in t, so
    k+1 Gauss-Legendre nodes integrate it exactly.
    """
    t, w = roots_legendre(k + 1)
    mass = 2.0 * math.pi * float(np.sum(w * (1.0 - t * t) ** k))
    return 1.0 / math.sqrt(mass)


def highest_weight_constant_closed_form(k: int) -> float:
    """Same constant from int_{-1}^{1} (1-t^2)^k dt = 2^(2k+1) (k!)^2 / (2k+1)!."""
    log_int = (2 * k + 1) * math.log(2.0) + 2 * gammaln(k + 1) - gammaln(2 * k + 2)
    return math.exp(-0.5 * (math.log(2.0 * math.pi) + log_int))


@dataclass(frozen=True, eq=False)
class SpectralExpansion:
    """Finite expansion sum_j coefficient_j * mode_j with mode frequencies."""

    frequencies: np.ndarray
    modes: tuple
    coefficients: np.ndarray

    def __post_init__(self):
        if not (len(self.frequencies) == len(self.modes) == len(self.coefficients)):
            raise ParameterError("expansion arrays must have equal length")

    def __len__(self) -> int:
        return len(self.modes)

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.coefficients) ** 2)))

    def scaled(self, multipliers) -> "SpectralExpansion":
        return replace(self, coefficients=self.coefficients * np.asarray(multipliers))

    def restricted(self, mask) -> "SpectralExpansion":
        mask = np.asarray(mask, bool)
        return SpectralExpansion(
            self.frequencies[mask],
            tuple(m for m, keep in zip(self.modes, mask) if keep),
            self.coefficients[mask],
        )

    @property
    def degree_bound(self) -> int:
        """Largest degree (sphere) or lattice sup-norm (torus) among the modes."""
        out = 0
        for m in self.modes:
            if m[0] == "W":
                out = max(out, max(abs(c) for c in m[1:]))
            else:
                out = max(out, int(m[1]))
        return out


def _phi(pts: np.ndarray) -> np.ndarray:
    return np.arctan2(pts[:, 1], pts[:, 0])


def _synth_Y(terms, pts: np.ndarray) -> np.ndarray:
    kmax = max(k for k, _ in terms)
    by_deg: dict[int, list[tuple[int, complex]]] = {}
    for (k, m), c in terms.items():
        by_deg.setdefault(k, []).append((m, c))
    out = np.empty(pts.shape[0], dtype=complex)
    for s in range(0, pts.shape[0], _CHUNK):
        p = pts[s:s + _CHUNK]
        amp = np.zeros((2 * kmax + 1, p.shape[0]), dtype=complex)
        for l, row in legendre_rows(kmax, p[:, 2]):
            for m, c in by_deg.get(l, ()):
                amp[m + kmax] += c * row[abs(m)]
        # sum_m amp[m] e^{i m phi} by powers of e^{i phi}
        e1 = np.exp(1j * _phi(p))
        acc = amp[kmax].copy()
        pw = np.ones(p.shape[0], dtype=complex)
        for m in range(1, kmax + 1):
            pw *= e1
            acc += amp[kmax + m] * pw + amp[kmax - m] * pw.conj()
        out[s:s + _CHUNK] = acc
    return out


def _synth_Y_product(terms, grid: QuadratureGrid) -> np.ndarray:
    kmax = max(k for k, _ in terms)
    by_deg: dict[int, list[tuple[int, complex]]] = {}
    for (k, m), c in terms.items():
        by_deg.setdefault(k, []).append((m, c))
    amp = np.zeros((grid.cos_theta.size, 2 * kmax + 1), dtype=complex)
    for l, row in legendre_rows(kmax, grid.cos_theta):
        for m, c in by_deg.get(l, ()):
            amp[:, m + kmax] += c * row[abs(m)]
    phase = np.exp(1j * np.outer(np.arange(-kmax, kmax + 1), grid.phi))
    return (amp @ phase).ravel()


def _synth_W_uniform(terms, grid: QuadratureGrid) -> np.ndarray | None:
    res, n = grid.resolution, grid.model.n
    if any(abs(c) >= res // 2 for m in terms for c in m):
        return None
    spec = np.zeros((res,) * n, dtype=complex)
    for m, c in terms.items():
        spec[tuple(mi % res for mi in m)] += c
    vals = np.fft.ifftn(spec) * (res**n) / (2.0 * math.pi) ** (n / 2)
    return vals.ravel()


def _synth_W(terms, pts: np.ndarray) -> np.ndarray:
    ms = np.array(list(terms.keys()), dtype=float)
    cs = np.array(list(terms.values()), dtype=complex)
    n = ms.shape[1]
    out = np.empty(pts.shape[0], dtype=complex)
    step = max(1, _CHUNK * 8 // max(len(cs), 1))
    for s in range(0, pts.shape[0], step):
        ph = np.exp(1j * (pts[s:s + step] @ ms.T))
        out[s:s + step] = ph @ cs
    return out / (2.0 * math.pi) ** (n / 2)


def synthesize(model: ManifoldModel, expansion: SpectralExpansion, pts: np.ndarray,
               pole: np.ndarray | None = None, grid: QuadratureGrid | None = None) -> np.ndarray:
    """Values of the expansion at the rows of ``pts`` (array point representation)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    out = np.zeros(pts.shape[0], dtype=complex)
    groups: dict[str, dict] = {}
    for mode, c in zip(expansion.modes, expansion.coefficients):
        if c == 0:
            continue
        key = mode[1] if mode[0] in ("Z", "Q") else mode[1:]
        g = groups.setdefault(mode[0], {})
        g[key] = g.get(key, 0.0) + c
    n = model.n
    for tag, terms in groups.items():
        if tag == "Y":
            if grid is not None and grid.layout == "product":
                out += _synth_Y_product(terms, grid)
            else:
                out += _synth_Y(terms, pts)
        elif tag == "Z":
            if pole is None:
                raise ParameterError("zonal modes need a pole")
            vol = sphere_volume(n)
            coefs = {k: c * math.sqrt(harmonic_dimension(n, k) / vol) for k, c in terms.items()}
            t = np.clip(pts @ pole, -1.0, 1.0)
            uniq, inv = np.unique(t, return_inverse=True)
            if uniq.size < t.size // 4:
                out += zonal_series(n, coefs, uniq)[inv.ravel()]
            else:
                out += zonal_series(n, coefs, t)
        elif tag == "Q":
            z = pts[:, 0] + 1j * pts[:, 1]
            for k, c in terms.items():
                out += c * highest_weight_constant(k) * z**k
        elif tag == "W":
            vals = None
            if grid is not None and grid.layout == "uniform":
                vals = _synth_W_uniform(terms, grid)
            out += vals if vals is not None else _synth_W(terms, pts)
        else:
            raise ParameterError(f"unknown mode family {tag!r}")
    return out


@dataclass(frozen=True, eq=False)
class EigenfunctionField:
    """A sampled field with its spectral expansion.

    ``axis`` is set when |field| is invariant under rotations about that unit
    vector (zonal fields about their pole, highest weight harmonics about the
    x_3 axis); norms of such fields may be computed on axial grids.
    """

    model: ManifoldModel
    expansion: SpectralExpansion
    lam: float
    kind: str
    grid: QuadratureGrid
    samples: np.ndarray
    pole: np.ndarray | None = None
    axis: np.ndarray | None = None
    label: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def degree_bound(self) -> int:
        return self.expansion.degree_bound

    @property
    def frequency_bound(self) -> float:
        return float(np.max(self.expansion.frequencies)) if len(self.expansion) else 0.0

    def evaluate(self, pts: np.ndarray) -> np.ndarray:
        return synthesize(self.model, self.expansion, pts, self.pole)

    def at(self, x: Point) -> complex:
        return complex(self.evaluate(point_array(self.model, x)[None, :])[0])

    def on_grid(self, grid: QuadratureGrid) -> "EigenfunctionField":
        _check_grid_for(self, grid)
        samples = synthesize(self.model, self.expansion, grid.points, self.pole, grid)
        return replace(self, grid=grid, samples=samples)

    def with_expansion(self, expansion: SpectralExpansion, kind: str | None = None,
                       label: str | None = None) -> "EigenfunctionField":
        samples = synthesize(self.model, expansion, self.grid.points, self.pole, self.grid)
        return replace(self, expansion=expansion, samples=samples,
                       kind=kind or self.kind, label=label or self.label)


def _check_grid_for(f: EigenfunctionField, grid: QuadratureGrid) -> None:
    if grid.model != f.model:
        raise ParameterError("grid belongs to a different model")
    if grid.axial:
        north = np.zeros(f.model.n + 1)
        north[-1] = 1.0
        if f.axis is None or abs(abs(float(f.axis @ north)) - 1.0) > 1e-12:
            raise ParameterError("axial grids need a field symmetric about the north-pole axis")
    if f.model.is_sphere:
        if grid.resolution < f.degree_bound + 1:
            raise ResolutionError(
                f"grid resolution {grid.resolution} < degree + 1 = {f.degree_bound + 1}"
            )
    elif grid.resolution <= 2 * f.degree_bound:
        raise ResolutionError(
            f"torus grid resolution {grid.resolution} must exceed 2 * max|m_i| = {2 * f.degree_bound}"
        )


def _make(model, expansion, lam, kind, grid, pole=None, axis=None, label="", meta=None):
    f = EigenfunctionField(model, expansion, float(lam), kind, grid,
                           np.empty(0, complex), pole, axis, label, meta or {})
    return f.on_grid(grid)


def _sphere_pole(model: ManifoldModel, pole: Point | None) -> np.ndarray:
    if not model.is_sphere:
        raise ParameterError("this construction lives on the sphere")
    return model.north_pole.array if pole is None else point_array(model, pole)


def _default_sphere_grid(model: ManifoldModel, k: int, axis: np.ndarray) -> QuadratureGrid:
    res = max(2, k + 1)
    if abs(axis[-1]) == 1.0 or model.n > 2:
        return build_axial_grid(model, res)
    return build_grid(model, res)


def zonal_field(model: ManifoldModel, k: int, pole: Point | None = None,
                grid: QuadratureGrid | None = None) -> EigenfunctionField:
    """Normalised zonal harmonic sqrt(d_k/|S^n|) g_k(cos d(x, pole)).

    ``grid`` defaults to the axial grid of resolution k+1 when the pole is the
    north pole and to the product grid otherwise.
    """
    if k < 0:
        raise ParameterError("degree must be >= 0")
    p = _sphere_pole(model, pole)
    if grid is None:
        grid = _default_sphere_grid(model, k, p)
    lam = sphere_frequency(model.n, k)
    exp = SpectralExpansion(np.array([lam]), (("Z", k),), np.array([1.0 + 0j]))
    return _make(model, exp, lam, ZONAL, grid, pole=p, axis=p, label=f"zonal_k{k}")


def highest_weight_field(model: ManifoldModel, k: int,
                         grid: QuadratureGrid | None = None) -> EigenfunctionField:
    """Normalised highest weight harmonic c_k (x_1 + i x_2)^k on S^2."""
    if not model.is_sphere or model.n != 2:
        raise ParameterError("highest weight harmonics are implemented on S^2 only")
    if k < 0:
        raise ParameterError("degree must be >= 0")
    axis = model.north_pole.array
    if grid is None:
        grid = build_axial_grid(model, max(2, k + 1))
    lam = sphere_frequency(2, k)
    exp = SpectralExpansion(np.array([lam]), (("Q", k),), np.array([1.0 + 0j]))
    return _make(model, exp, lam, HIGHEST_WEIGHT, grid, axis=axis, label=f"highest_weight_k{k}",
                 meta={"c_k": highest_weight_constant(k)})


def torus_wave(model: ManifoldModel, m: Sequence[int],
               grid: QuadratureGrid | None = None) -> EigenfunctionField:
    """(2 pi)^(-n/2) exp(i m.x) with frequency |m|."""
    if model.is_sphere:
        raise ParameterError("torus waves live on the torus")
    m = tuple(int(c) for c in m)
    if len(m) != model.n:
        raise ParameterError("lattice vector length must equal the dimension")
    lam = math.sqrt(sum(c * c for c in m))
    if grid is None:
        grid = build_grid(model, max(8, 2 * max(abs(c) for c in m) + 2))
    exp = SpectralExpansion(np.array([lam]), (("W",) + m,), np.array([1.0 + 0j]))
    return _make(model, exp, lam, TORUS_WAVE, grid, label="torus_wave_" + "_".join(map(str, m)))


def window_modes(model: ManifoldModel, lo: float, hi: float) -> tuple[np.ndarray, tuple]:
    """Frequencies and mode ids of all eigenfunctions with frequency in [lo, hi)."""
    if model.is_sphere:
        if model.n != 2:
            raise ParameterError("spherical harmonic bases are implemented on S^2 only")
        k_lo = max(0, math.floor(math.sqrt(max(lo, 0.0) ** 2 + 0.25) - 0.5) - 1)
        freqs, modes = [], []
        k = k_lo
        while True:
            lam = sphere_frequency(2, k)
            if lam >= hi:
                break
            if lam >= lo:
                for m in range(-k, k + 1):
                    freqs.append(lam)
                    modes.append(("Y", k, m))
            k += 1
        return np.array(freqs), tuple(modes)
    R = math.ceil(hi)
    freqs, modes = [], []
    for m in itertools.product(range(-R, R + 1), repeat=model.n):
        lam = math.sqrt(sum(c * c for c in m))
        if lo <= lam < hi:
            freqs.append(lam)
            modes.append(("W",) + m)
    return np.array(freqs), tuple(modes)


def random_window_field(model: ManifoldModel, lam: float, width: float, seed: int,
                        grid: QuadratureGrid | None = None) -> EigenfunctionField:
    """Unit-norm random combination of all modes with frequency in [lam, lam+width).

    Coefficients are independent standard complex Gaussians, then
    normalised; the draw is fixed by ``seed``.
    """
    if width <= 0:
        raise ParameterError("window width must be positive")
    freqs, modes = window_modes(model, lam, lam + width)
    if len(modes) == 0:
        raise ParameterError(f"window [{lam}, {lam + width}) contains no eigenvalue")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((len(modes), 2))
    c = (g[:, 0] + 1j * g[:, 1]) / math.sqrt(2.0)
    c /= np.linalg.norm(c)
    exp = SpectralExpansion(freqs, modes, c)
    if grid is None:
        d = exp.degree_bound
        grid = build_grid(model, max(2, d + 1)) if model.is_sphere else build_grid(model, max(8, 2 * d + 2))
    return _make(model, exp, lam, RANDOM_WINDOW, grid,
                 label=f"random_window_{lam:g}_{width:g}_s{seed}", meta={"seed": int(seed)})


def field_from_expansion(model: ManifoldModel, expansion: SpectralExpansion, lam: float,
                         grid: QuadratureGrid, kind: str, pole=None, axis=None,
                         label: str = "") -> EigenfunctionField:
    return _make(model, expansion, lam, kind, grid, pole=pole, axis=axis, label=label)


@dataclass(frozen=True)
class DarbouxReport:
    k: int
    n: int
    amplitude: float
    max_abs_deviation: float
    max_scaled_deviation: float
    d_min: float
    d_max: float


def darboux_compare(k: int, d_values: Sequence[float], n: int = 2) -> DarbouxReport:
    """Compare the zonal profile with its oscillatory Darboux model.

    The profile Z(d) (sin d)^((n-1)/2) is fitted by A cos(N_k d + gamma),
    N_k = (2k+n-1)/2, gamma = -(n-1) pi/4, with A from least squares.  The
    deviation |profile/A - cos(...)| is reported raw and multiplied by
    lambda*d; the latter stays bounded when the remainder is O((lambda d)^-1).
    """
    lam = sphere_frequency(n, k)
    d = np.asarray(d_values, dtype=float)
    if d.size == 0 or np.any(d < 1.0 / lam - 1e-12) or np.any(d > math.pi - 1.0 / lam + 1e-12):
        raise ParameterError("distances must lie in [1/lambda, pi - 1/lambda]")
    vol = sphere_volume(n)
    z = math.sqrt(harmonic_dimension(n, k) / vol) * legendre_like_eval(n, k, np.cos(d))
    prof = z * np.sin(d) ** (0.5 * (n - 1))
    model = np.cos(0.5 * (2 * k + n - 1) * d - 0.25 * (n - 1) * math.pi)
    amp = float(prof @ model / (model @ model))
    dev = np.abs(prof / amp - model)
    return DarbouxReport(k, n, amp, float(dev.max()), float(np.max(dev * lam * d)),
                         float(d.min()), float(d.max()))
