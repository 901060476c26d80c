"""Batch driver: JSON experiment config in, CSV / JSON / plot-data files out.

Exit codes: 0 success, 2 configuration or I/O error, 3 resolution or
precondition error raised by the numerics.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from .analysis import (
    audit_operator_bound,
    audit_theorem_1_2,
    critical_exponent,
    dyadic_radii,
    fit_scaling,
    sigma,
)
from .covering import build_covering, covering_chain_audit
from .errors import EigenlocError, ParameterError
from .geometry import ManifoldModel, Point, build_axial_grid, build_grid
from .harmonics import (
    EigenfunctionField,
    highest_weight_field,
    random_window_field,
    torus_wave,
    zonal_field,
)
from .measures import Cap, Rectangle, lp_norm, norm_grid, parse_exponent, qe_statistic, region_volume
from .spectral_filter import WindowFilterSpec, apply_filter, filter_multiplier

log = logging.getLogger("eigenloc")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PRECONDITION = 3

SUBCOMMANDS = ("norms", "scaling", "filter-audit", "covering-audit", "theorem-audit", "qe", "report")


class ConfigError(Exception):
    pass


class ModelSpec(BaseModel):
    kind: Literal["sphere", "torus"] = "sphere"
    n: int = Field(2, ge=2)


class FamilySpec(BaseModel):
    kind: Literal["zonal", "highest_weight", "torus_wave", "random_window"]
    name: Optional[str] = None
    k: list[int] = []
    vectors: list[list[int]] = []
    lam: list[float] = []
    width: float = Field(1.0, gt=0)
    seeds: list[int] = [0]

    @property
    def label(self) -> str:
        return self.name or self.kind

    @model_validator(mode="after")
    def _nonempty(self):
        need = {"zonal": self.k, "highest_weight": self.k, "torus_wave": self.vectors,
                "random_window": self.lam}[self.kind]
        if not need:
            raise ValueError(f"family {self.label!r} has an empty parameter list")
        if self.kind == "random_window" and not self.seeds:
            raise ValueError("random_window families need at least one seed")
        return self


class RhoSpec(BaseModel):
    kind: Literal["smooth_bump", "fejer"] = "smooth_bump"
    sharpness: float = Field(1.5, gt=0)
    half_width: float = Field(0.5, gt=0, le=0.5)


class FilterAuditSpec(BaseModel):
    lam: list[float] = [32.0, 64.0]
    r: list[float] = [0.25, 0.5]
    trials: int = Field(20, ge=1)


class CoveringSpec(BaseModel):
    r: list[float] = [math.pi / 8, math.pi / 16, math.pi / 32]
    resolution: int = Field(256, ge=8)


class ExperimentConfig(BaseModel):
    model: ModelSpec = ModelSpec()
    families: list[FamilySpec]
    p: list[Union[float, str]] = [2, 6, "inf"]
    r_grid: Optional[list[float]] = None
    rho: RhoSpec = RhoSpec()
    resolution: Optional[int] = None
    out: str = "out"
    seed: int = Field(0, ge=0)
    filter_audit: FilterAuditSpec = FilterAuditSpec()
    covering: CoveringSpec = CoveringSpec()

    @field_validator("families", "p")
    @classmethod
    def _nonempty_list(cls, v):
        if not v:
            raise ValueError("list must be nonempty")
        return v

    @field_validator("p")
    @classmethod
    def _exponents(cls, v):
        for p in v:
            if parse_exponent(p) < 2:
                raise ValueError(f"exponent {p} must be >= 2")
        return v

    @property
    def manifold(self) -> ManifoldModel:
        return ManifoldModel(self.model.kind, self.model.n)

    def exponents(self) -> list[float]:
        return [parse_exponent(p) for p in self.p]

    def frequencies(self) -> list[float]:
        lams = []
        for fam in self.families:
            if fam.kind in ("zonal", "highest_weight"):
                lams += [math.sqrt(k * (k + self.model.n - 1)) for k in fam.k]
            elif fam.kind == "torus_wave":
                lams += [math.sqrt(sum(c * c for c in m)) for m in fam.vectors]
            else:
                lams += list(fam.lam)
        return lams

    def max_degree(self) -> int:
        degs = []
        for fam in self.families:
            if fam.kind in ("zonal", "highest_weight"):
                degs += fam.k
            elif fam.kind == "torus_wave":
                degs += [max(abs(c) for c in m) for m in fam.vectors]
            else:
                degs += [int(math.ceil(l + fam.width)) for l in fam.lam]
        return max(degs)

    def hash(self) -> str:
        payload = self.model_dump(mode="json", exclude={"out"})
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]

    @model_validator(mode="after")
    def _consistency(self):
        m = self.manifold
        sphere_kinds = {"zonal", "highest_weight"}
        for fam in self.families:
            if m.is_sphere and fam.kind == "torus_wave":
                raise ValueError("torus_wave families need a torus model")
            if not m.is_sphere and fam.kind in sphere_kinds:
                raise ValueError(f"{fam.kind} families need a sphere model")
            if fam.kind == "torus_wave" and any(len(v) != self.model.n for v in fam.vectors):
                raise ValueError("lattice vectors must have length n")
        lams = [l for l in self.frequencies() if l > 0]
        if self.r_grid is not None:
            if not self.r_grid:
                raise ValueError("r_grid must be nonempty")
            lo, hi = 1.0 / max(lams), 0.5 * m.inj
            bad = [r for r in self.r_grid if not lo * (1 - 1e-9) <= r <= hi * (1 + 1e-9)]
            if bad:
                raise ValueError(f"r_grid values {bad} outside [{lo:.4g}, {hi:.4g}]")
        if self.resolution is not None and self.resolution < self.max_degree() + 1:
            raise ValueError(f"resolution {self.resolution} < max degree + 1 = {self.max_degree() + 1}")
        return self


DEFAULT_CONFIG = {
    "model": {"kind": "sphere", "n": 2},
    "families": [
        {"kind": "zonal", "k": [16, 32, 64, 128, 256]},
        {"kind": "highest_weight", "k": [16, 32, 64, 128, 256]},
        {"kind": "random_window", "lam": [16.0], "seeds": [0, 1]},
    ],
    "p": [2, 6, "inf"],
}


def load_config(path: str | None) -> ExperimentConfig:
    try:
        raw = DEFAULT_CONFIG if path is None else json.loads(Path(path).read_text())
        return ExperimentConfig.model_validate(raw)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except (ValidationError, ParameterError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def _p_label(p: float) -> str:
    return "inf" if math.isinf(p) else f"{p:g}"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "inf" if math.isinf(v) else f"{v:.12g}"
    return str(v)


class Run:
    """State shared by the subcommands of one invocation."""

    def __init__(self, cfg: ExperimentConfig, out: Path, threads: int):
        self.cfg = cfg
        self.model = cfg.manifold
        self.out = out
        self.threads = threads or (os.cpu_count() or 1)
        self._fields: list[tuple[str, EigenfunctionField]] | None = None
        self._A: int | None = None

    def map(self, fn, items):
        items = list(items)
        if self.threads <= 1 or len(items) <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(self.threads) as pool:
            return list(pool.map(fn, items))

    def _seed(self, s: int) -> int:
        return int(np.random.SeedSequence([self.cfg.seed, s]).generate_state(1)[0])

    def fields(self) -> list[tuple[str, EigenfunctionField]]:
        if self._fields is None:
            out = []
            for fam in self.cfg.families:
                if fam.kind == "zonal":
                    out += [(fam.label, zonal_field(self.model, k)) for k in fam.k]
                elif fam.kind == "highest_weight":
                    out += [(fam.label, highest_weight_field(self.model, k)) for k in fam.k]
                elif fam.kind == "torus_wave":
                    out += [(fam.label, torus_wave(self.model, v)) for v in fam.vectors]
                else:
                    out += [(fam.label, random_window_field(self.model, lam, fam.width, self._seed(s)))
                            for lam in fam.lam for s in fam.seeds]
            self._fields = out
        return self._fields

    def norm_grid(self, f: EigenfunctionField, p: float):
        if self.cfg.resolution is None:
            return norm_grid(f, p)
        g = norm_grid(f, 2)
        return build_axial_grid(self.model, self.cfg.resolution) if g.axial else build_grid(
            self.model, self.cfg.resolution)

    def r_grid(self, f: EigenfunctionField) -> list[float]:
        if self.cfg.r_grid is not None:
            return list(self.cfg.r_grid)
        return dyadic_radii(f.lam, 0.5 * self.model.inj)

    def spec(self, lam: float, r: float) -> WindowFilterSpec:
        rho = self.cfg.rho
        return WindowFilterSpec(lam, r, rho.kind, rho.sharpness, rho.half_width)

    @property
    def covering_constant(self) -> int:
        """Doubled-ball overlap of the reference covering at r = inj/8."""
        if self._A is None:
            res = 128 if self.model.is_sphere else 256
            self._A = build_covering(self.model, self.model.inj / 8, build_grid(self.model, res)).overlap
        return self._A

    def meta(self) -> dict:
        return {
            "config_hash": self.cfg.hash(),
            "seed": self.cfg.seed,
            "resolution": self.cfg.resolution if self.cfg.resolution is not None else "auto",
            "rho_kind": self.cfg.rho.kind,
            "covering_constant_A": self.covering_constant,
            "model": {"kind": self.model.kind, "n": self.model.n},
        }

    def write_json(self, name: str, payload: dict) -> Path:
        doc = {"schema": 1, **payload, "meta": {**payload.get("meta", {}), **self.meta()}}
        path = self.out / f"audit_{name}.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path


def cmd_norms(run: Run) -> list[dict]:
    ps = run.cfg.exponents()

    def one(item):
        fam, f = item
        return [{"field_id": f.label, "lam": f.lam, "p": p, "r": None,
                 "value": lp_norm(f, p, run.norm_grid(f, p)).value} for p in ps]

    rows = [row for rows in run.map(one, run.fields()) for row in rows]
    lines = ["field_id,lam,p,r,value"]
    lines += [",".join(_fmt(row[c]) for c in ("field_id", "lam", "p", "r", "value")) for row in rows]
    (run.out / "norms.csv").write_text("\n".join(lines) + "\n")
    return rows


def cmd_scaling(run: Run) -> dict:
    rows = cmd_norms(run)
    by_field = {f.label: fam for fam, f in run.fields()}
    results = []
    for fam in dict.fromkeys(by_field.values()):
        for p in run.cfg.exponents():
            pts = sorted((r["lam"], r["value"]) for r in rows if by_field[r["field_id"]] == fam and r["p"] == p)
            data = "\n".join(f"{math.log(l):.12g} {math.log(v):.12g}" for l, v in pts if v > 0)
            (run.out / f"scaling_{fam}_{_p_label(p)}.dat").write_text(data + "\n")
            entry = {"family": fam, "p": p, "sigma": sigma(run.model.n, p), "points": len(pts)}
            try:
                fit = fit_scaling([l for l, _ in pts], [v for _, v in pts])
                entry.update(slope=fit.slope, stderr=fit.stderr)
            except ParameterError as exc:
                entry.update(slope=None, note=str(exc))
            results.append(entry)
    payload = {"audit": "scaling", "fits": results}
    run.write_json("scaling", _clean(payload))
    return payload


def cmd_filter_audit(run: Run) -> dict:
    fa = run.cfg.filter_audit
    ps = [p for p in run.cfg.exponents() if p > 2] or [critical_exponent(run.model.n)]
    reports, identity = [], []
    for lam in fa.lam:
        for r in fa.r:
            spec = run.spec(lam, r)
            for p in ps:
                rep = audit_operator_bound(run.model, lam, r, p, fa.trials, run.cfg.seed, spec)
                reports.append({"lam": lam, "r": r, "p": p, "max_ratio": rep.max_ratio,
                                "min_ratio": rep.min_ratio, "trials": len(rep.points)})
            # centred eigenfunction: T e = (1 + rho(2 r lam)) e
            for fam, f in run.fields():
                if abs(f.lam - lam) < 1e-12:
                    tf = apply_filter(f, spec)
                    mult = float(filter_multiplier(spec, [f.lam])[0])
                    err = np.max(np.abs(tf.samples - mult * f.samples)) / np.max(np.abs(f.samples))
                    identity.append({"field": f.label, "r": r, "multiplier": mult, "rel_error": float(err)})
    payload = {"audit": "operator_bound", "max_ratio": max(x["max_ratio"] for x in reports),
               "points": reports, "filter_identity": identity,
               "meta": {"sharpness": run.cfg.rho.sharpness}}
    run.write_json("operator_bound", _clean(payload))
    return payload


def cmd_covering_audit(run: Run) -> dict:
    cov = run.cfg.covering
    deg = run.cfg.max_degree()
    res = max(cov.resolution, deg + 1) if run.model.is_sphere else max(cov.resolution, 2 * deg + 2)
    grid = build_grid(run.model, res)
    entries, chains = [], []
    for r in cov.r:
        c = build_covering(run.model, r, grid)
        entries.append({"r": r, "count": c.count, "overlap_A": c.overlap,
                        "density_constant": c.density_constant,
                        "min_multiplicity": int(c.multiplicity.min())})
        for fam, f in run.fields():
            rep = covering_chain_audit(f, c)
            chains.append({"field": f.label, "r": r, **{pt["step"]: pt["ratio"] for pt in rep.points}})
    payload = {"audit": "covering", "coverings": entries, "chain": chains,
               "overlap_range": [min(e["overlap_A"] for e in entries), max(e["overlap_A"] for e in entries)],
               "meta": {"grid_resolution": res}}
    run.write_json("covering", _clean(payload))
    return payload


def cmd_theorem_audit(run: Run) -> dict:
    fields = [f for _, f in run.fields()]
    reps = run.map(lambda f: audit_theorem_1_2([f], run.r_grid), fields)
    points = [pt for rep in reps for pt in rep.points]
    payload = {"audit": "theorem_1_2", "max_ratio": max(pt["ratio"] for pt in points),
               "min_ratio": min(pt["ratio"] for pt in points), "points": points,
               "meta": {"p": critical_exponent(run.model.n)}}
    run.write_json("theorem_1_2", _clean(payload))
    return payload


def cmd_qe(run: Run) -> dict:
    out = []
    for fam, f in run.fields():
        if run.model.is_sphere:
            regions = {"polar_cap": Cap(run.model.north_pole, min(f.lam**-0.5, run.model.inj))}
        else:
            regions = {"disc": Cap(Point.on_torus(1.0, 2.0), 0.5),
                       "rectangle": Rectangle((0.0, 0.0), (math.pi, 0.5 * math.pi))}
        for name, reg in regions.items():
            frac = region_volume(run.model, reg) / run.model.volume
            out.append({"field": f.label, "lam": f.lam, "region": name, "volume_fraction": frac,
                        "statistic": qe_statistic(f, reg)})
    payload = {"audit": "qe", "points": out}
    run.write_json("qe", _clean(payload))
    return payload


def cmd_report(run: Run) -> dict:
    return {
        "norms": cmd_scaling(run),
        "operator_bound": cmd_filter_audit(run),
        "covering": cmd_covering_audit(run),
        "theorem_1_2": cmd_theorem_audit(run),
        "qe": cmd_qe(run),
    }


COMMANDS = {
    "norms": cmd_norms,
    "scaling": cmd_scaling,
    "filter-audit": cmd_filter_audit,
    "covering-audit": cmd_covering_audit,
    "theorem-audit": cmd_theorem_audit,
    "qe": cmd_qe,
    "report": cmd_report,
}


def _clean(v):
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eigenloc", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="JSON experiment config (default: built-in sphere config)")
    ap.add_argument("--out", help="output directory (overrides the config)")
    ap.add_argument("--seed", type=int, help="base seed (overrides the config)")
    ap.add_argument("--resolution", type=int, help="grid resolution for whole-manifold norms")
    ap.add_argument("--threads", type=int, default=0, help="worker threads, 0 = auto")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.resolution is not None:
            overrides["resolution"] = args.resolution
        if args.out is not None:
            overrides["out"] = args.out
        if overrides:
            try:
                cfg = ExperimentConfig.model_validate({**cfg.model_dump(), **overrides})
            except ValidationError as exc:
                raise ConfigError(f"invalid override: {exc}") from exc
        out = Path(cfg.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
            probe = out / ".write_test"
            probe.write_text("")
            probe.unlink()
        except OSError as exc:
            raise ConfigError(f"output directory {out} is not writable: {exc}") from exc
        if args.threads < 0:
            raise ConfigError("--threads must be >= 0")
        run = Run(cfg, out, args.threads)
        COMMANDS[args.command](run)
    except ConfigError as exc:
        print(f"eigenloc: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EigenlocError, ValueError) as exc:
        print(f"eigenloc: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except OSError as exc:
        print(f"eigenloc: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
