"""Growth exponents, log-log scaling fits and inequality audits.

The estimates being audited hold with unnamed constants, so every audit
reports LHS / RHS with the constant set to one; what is meaningful is
whether these ratios stay bounded (or bounded away from zero) across sweeps.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.stats import linregress

from .errors import ParameterError
from .harmonics import EigenfunctionField, random_window_field
from .measures import lp_norm, norm_grid, parse_exponent, sup_ball_norm
from .spectral_filter import WindowFilterSpec, apply_filter, check_filter_parameters, kernel_probe


def critical_exponent(n: int) -> float:
    if n < 2:
        raise ParameterError("dimension must be >= 2")
    return 2.0 * (n + 1) / (n - 1)


def sigma(n: int, p) -> float:
    """Sharp growth exponent of ||e_lam||_p: two branches meeting at p_c."""
    p = parse_exponent(p)
    if p < 2:
        raise ParameterError("sigma(p) is defined for p >= 2")
    if math.isinf(p):
        return 0.5 * (n - 1)
    if p >= critical_exponent(n):
        return n * (0.5 - 1.0 / p) - 0.5
    return 0.5 * (n - 1) * (0.5 - 1.0 / p)


@dataclass(frozen=True)
class ScalingLaw:
    n: int
    p: float

    @property
    def sigma(self) -> float:
        return sigma(self.n, self.p)

    @property
    def critical(self) -> float:
        return critical_exponent(self.n)


@dataclass(frozen=True)
class ScalingFit:
    lams: tuple[float, ...]
    values: tuple[float, ...]
    slope: float
    stderr: float
    intercept: float

    @property
    def lam_range(self) -> tuple[float, float]:
        return min(self.lams), max(self.lams)


def fit_scaling(lams: Sequence[float], values: Sequence[float], min_points: int = 4,
                min_spread: float = 8.0) -> ScalingFit:
    """Least-squares slope of log(value) against log(lam)."""
    x = np.asarray(lams, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.shape != y.shape or x.size < min_points:
        raise ParameterError(f"need at least {min_points} (lam, value) pairs")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ParameterError("scaling fits need positive lam and values")
    if x.max() / x.min() < min_spread:
        raise ParameterError(f"lam range spans less than a factor {min_spread:g}")
    res = linregress(np.log(x), np.log(y))
    return ScalingFit(tuple(x.tolist()), tuple(y.tolist()), float(res.slope),
                      float(res.stderr), float(res.intercept))


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return v


@dataclass
class AuditReport:
    """Per-point LHS/RHS ratios of one audited inequality."""

    audit_id: str
    points: list[dict]
    max_ratio: float
    meta: dict = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    def __post_init__(self):
        for pt in self.points:
            r = pt.get("ratio")
            if r is not None and not (math.isfinite(r) and r >= 0):
                raise ParameterError(f"audit {self.audit_id}: non-finite or negative ratio {r}")

    @property
    def ratios(self) -> np.ndarray:
        return np.array([pt["ratio"] for pt in self.points if not pt.get("excluded")])

    @property
    def min_ratio(self) -> float:
        r = self.ratios
        return float(r.min()) if r.size else 0.0

    def to_dict(self) -> dict:
        return _jsonable({
            "schema": 1,
            "audit": self.audit_id,
            "max_ratio": self.max_ratio,
            "min_ratio": self.min_ratio,
            "points": self.points,
            "meta": self.meta,
            "flags": self.flags,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def dyadic_radii(lam: float, r_max: float, r_min: float | None = None) -> list[float]:
    """r_min * 2^j for j = 0, 1, ... up to r_max; r_min defaults to 1/lam."""
    r = 1.0 / lam if r_min is None else r_min
    out = []
    while r <= r_max * (1 + 1e-12):
        out.append(r)
        r *= 2.0
    return out


def _max(points: list[dict]) -> float:
    vals = [pt["ratio"] for pt in points if not pt.get("excluded")]
    return float(max(vals)) if vals else 0.0


def _in_range(f: EigenfunctionField, r: float) -> bool:
    return (1.0 - 1e-9) / f.lam <= r <= f.model.inj * (1 + 1e-12)


def audit_theorem_1_2(fields: Iterable[EigenfunctionField],
                      r_values: Sequence[float] | Callable[[EigenfunctionField], Sequence[float]] | None = None
                      ) -> AuditReport:
    """||e||_{p_c} / [lam^sigma(p_c) (r^{-(n+1)/4} sup_x ||e||_{L^2(B_r(x))})^{2/(n+1)}].

    ``r_values`` is a fixed list, a callable giving radii per field, or None
    for dyadic radii from 1/lam to inj plus inj itself.  Radii outside
    [1/lam, inj] are skipped.
    """
    points = []
    for f in fields:
        n = f.model.n
        pc = critical_exponent(n)
        lhs = lp_norm(f, pc, norm_grid(f, pc)).value
        if r_values is None:
            rs = dyadic_radii(f.lam, f.model.inj)
            if abs(rs[-1] - f.model.inj) > 1e-12:
                rs.append(f.model.inj)
        elif callable(r_values):
            rs = list(r_values(f))
        else:
            rs = list(r_values)
        for r in rs:
            if not _in_range(f, r):
                continue
            sup = sup_ball_norm(f, r)
            rhs = f.lam ** sigma(n, pc) * (r ** (-(n + 1) / 4.0) * sup.value) ** (2.0 / (n + 1))
            points.append({"field": f.label, "kind": f.kind, "n": n, "lam": f.lam, "r": r,
                           "lam_r": f.lam * r,
                           "lhs": lhs, "sup_ball": sup.value, "rhs": rhs, "ratio": lhs / rhs,
                           "centers": sup.count})
    dims = sorted({pt["n"] for pt in points})
    return AuditReport("theorem_1_2", points, _max(points),
                       {"p": [critical_exponent(n) for n in dims], "n": dims})


def operator_test_family(model, lam: float, r: float, trials: int = 20, seed: int = 0,
                         width: float = 1.0, offsets: Sequence[float] = (-2.0, 1.0, 3.0),
                         spec: WindowFilterSpec | None = None,
                         include_probe: bool = True) -> list[EigenfunctionField]:
    """Random unit-band windows at lam, windows shifted by ``offsets``/r, and the kernel probe."""
    fam = [random_window_field(model, lam, width, seed + i) for i in range(trials)]
    for j, off in enumerate(offsets):
        lo = lam + off / r
        if lo >= 0:
            fam.append(random_window_field(model, lo, width, seed + trials + j))
    if include_probe:
        fam.append(kernel_probe(model, spec or WindowFilterSpec(lam, r)))
    return fam


def audit_operator_bound(model, lam: float, r: float, p, trials: int = 20, seed: int = 0,
                         spec: WindowFilterSpec | None = None,
                         family: Sequence[EigenfunctionField] | None = None) -> AuditReport:
    """||T_{lam,r} f||_p / (r^{-1/2} lam^sigma(p) ||f||_2) over a family of test functions."""
    p = parse_exponent(p)
    check_filter_parameters(model, lam, r)
    spec = spec or WindowFilterSpec(lam, r)
    if family is None:
        family = operator_test_family(model, lam, r, trials, seed, spec=spec)
    scale = r**-0.5 * lam ** sigma(model.n, p)
    points = []
    for f in family:
        norm_f = f.expansion.norm
        tf = apply_filter(f, spec)
        out = lp_norm(tf, p, norm_grid(tf, p)).value if norm_f > 0 else 0.0
        ratio = out / (scale * norm_f) if norm_f > 0 else 0.0
        points.append({"field": f.label, "kind": f.kind, "lam": lam, "r": r, "p": p,
                       "lhs": out, "rhs": scale * norm_f, "ratio": ratio})
    return AuditReport("operator_bound", points, _max(points),
                       {"lam": lam, "r": r, "p": p, "seed": seed, "trials": trials,
                        "rho_kind": spec.rho_kind, "sharpness": spec.sharpness})


def localized_rhs(f: EigenfunctionField, r: float, p: float, sup_value: float) -> float:
    """Right-hand side of the localized L^p bound (finite p) or sup-norm bound (p = inf), C = 1."""
    n = f.model.n
    if math.isinf(p):
        return f.lam ** (0.5 * (n - 1)) * r**-0.5 * sup_value
    return f.lam ** sigma(n, p) * (r ** (-p / (2.0 * (p - 2.0))) * sup_value) ** ((p - 2.0) / p)


def audit_localized(f: EigenfunctionField, r_values: Sequence[float], p) -> AuditReport:
    """||e||_p against its localized majorant, radius by radius."""
    p = parse_exponent(p)
    if not p > 2:
        raise ParameterError("localized bounds need p > 2")
    lhs = lp_norm(f, p, norm_grid(f, p)).value
    points = []
    for r in r_values:
        if not _in_range(f, r):
            raise ParameterError(f"r = {r:.4g} outside [1/lam, inj]")
        sup = sup_ball_norm(f, r)
        rhs = localized_rhs(f, r, p, sup.value)
        points.append({"field": f.label, "lam": f.lam, "r": r, "p": p, "lhs": lhs,
                       "sup_ball": sup.value, "rhs": rhs, "ratio": lhs / rhs})
    return AuditReport("localized", points, _max(points), {"field": f.label, "p": p})


def ball_law_exponent(f: EigenfunctionField, r: float, steps: int = 3) -> float:
    """Slope of log sup_x ||f||_{L^2(B_s(x))} against log s for s = r, r/2, ... (s >= 1/lam).

    When fewer than two such radii exist the radii r, 2r, ... (capped at
    inj) are used instead.
    """
    radii = [r / 2**j for j in range(steps) if r / 2**j >= (1.0 - 1e-9) / f.lam]
    if len(radii) < 2:
        radii = [r * 2**j for j in range(steps) if r * 2**j <= f.model.inj * (1 + 1e-12)]
    if len(radii) < 2:
        raise ParameterError("cannot bracket the ball law at this radius")
    vals = [sup_ball_norm(f, s).value for s in radii]
    return float(np.polyfit(np.log(radii), np.log(vals), 1)[0])


def audit_improvement_4_7(fields: Iterable[EigenfunctionField], schedule: Callable[[float], float],
                          tolerance: float = 0.1) -> AuditReport:
    """Check that a ball law sup ||e||_{L^2(B_r)} <~ r^{n/2} at r = r(lam) yields
    ||e||_{p_c} <~ (r(lam) lam)^{sigma(p_c)}.

    Fields whose measured ball-law exponent deviates from n/2 by more than
    ``tolerance`` fail the hypothesis; they are flagged and excluded.
    """
    points, flags = [], []
    for f in fields:
        n = f.model.n
        pc = critical_exponent(n)
        r = float(schedule(f.lam))
        if not _in_range(f, r):
            raise ParameterError(f"schedule gives r = {r:.4g} outside [1/lam, inj]")
        slope = ball_law_exponent(f, r)
        ok = abs(slope - 0.5 * n) <= tolerance
        lhs = lp_norm(f, pc, norm_grid(f, pc)).value
        rhs = (r * f.lam) ** sigma(n, pc)
        pt = {"field": f.label, "lam": f.lam, "r": r, "ball_law_exponent": slope,
              "lhs": lhs, "rhs": rhs, "ratio": lhs / rhs}
        if not ok:
            pt["excluded"] = True
            flags.append(f"{f.label}: ball-law exponent {slope:.3f} differs from n/2 = {0.5 * n:g}")
        points.append(pt)
    return AuditReport("improvement_4_7", points, _max(points), {"tolerance": tolerance}, flags)
