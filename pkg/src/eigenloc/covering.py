"""Ball coverings of a model manifold and the covering-argument chain.

Membership of grid nodes in the balls B_r(x_l) and B_2r(x_l) is stored as
sparse incidence matrices, so per-ball integrals of any field sampled on the
covering's grid are one sparse product away.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.spatial import cKDTree

from .analysis import AuditReport, critical_exponent
from .errors import CoverageError, ParameterError, ResolutionError
from .geometry import TWO_PI, CenterSet, ManifoldModel, QuadratureGrid, generate_centers
from .harmonics import EigenfunctionField


@dataclass(frozen=True, eq=False)
class BallCovering:
    """Balls B_r(x_l) covering every node of ``grid``.

    ``overlap`` is the largest number of doubled balls B_2r(x_l) containing a
    single grid node (the doubled radius is capped at the injectivity radius).
    """

    model: ManifoldModel
    centers: CenterSet
    r: float
    grid: QuadratureGrid
    multiplicity: np.ndarray
    doubled_multiplicity: np.ndarray
    incidence: csr_matrix
    doubled_incidence: csr_matrix
    meta: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return len(self.centers)

    @property
    def overlap(self) -> int:
        return int(self.doubled_multiplicity.max())

    @property
    def doubled_radius(self) -> float:
        return min(2.0 * self.r, self.model.inj)

    @property
    def density_constant(self) -> float:
        """N r^n, which stays bounded as r shrinks."""
        return self.count * self.r**self.model.n


def _wrap(pts: np.ndarray) -> np.ndarray:
    # periodic boxes need coordinates in [0, 2 pi); mod can round up to 2 pi
    x = np.mod(pts, TWO_PI)
    x[x >= TWO_PI] = 0.0
    return x


def _tree(model: ManifoldModel, pts: np.ndarray) -> cKDTree:
    if model.is_sphere:
        return cKDTree(pts)
    return cKDTree(_wrap(pts), boxsize=TWO_PI)


def _search_radius(model: ManifoldModel, r: float) -> float:
    r = min(r, model.inj)
    if model.is_sphere:
        return 2.0 * math.sin(0.5 * r) * (1 + 1e-12)
    return r * (1 + 1e-12)


def _incidence(model: ManifoldModel, centers: np.ndarray, nodes: cKDTree, r: float,
               n_nodes: int) -> csr_matrix:
    lists = nodes.query_ball_point(
        centers if model.is_sphere else _wrap(centers),
        _search_radius(model, r),
    )
    indptr = np.zeros(len(lists) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(x) for x in lists])
    indices = np.fromiter((i for x in lists for i in x), dtype=np.int64, count=int(indptr[-1]))
    data = np.ones(indices.size)
    return csr_matrix((data, indices, indptr), shape=(len(lists), n_nodes))


def build_covering(model: ManifoldModel, r: float, grid: QuadratureGrid) -> BallCovering:
    """Cover ``model`` by balls of radius r about ``generate_centers(model, r)``.

    Coverage and doubled-ball overlap are measured on the nodes of ``grid``.
    """
    if grid.model != model:
        raise ParameterError("grid belongs to a different model")
    if grid.axial:
        raise ParameterError("coverings need a full grid, not an axial one")
    if not 0 < r <= model.inj * (1 + 1e-12):
        raise ParameterError("covering radius must lie in (0, inj]")
    if r < 4.0 * grid.spacing:
        raise ResolutionError(f"r = {r:.4g} is below 4x the grid spacing {grid.spacing:.4g}")
    centers = generate_centers(model, r)
    nodes = _tree(model, grid.points)
    n_nodes = grid.points.shape[0]
    inc = _incidence(model, centers.points, nodes, r, n_nodes)
    inc2 = _incidence(model, centers.points, nodes, 2.0 * r, n_nodes)
    mult = np.asarray(inc.sum(axis=0)).ravel()
    mult2 = np.asarray(inc2.sum(axis=0)).ravel()
    gaps = int(np.count_nonzero(mult == 0))
    if gaps:
        raise CoverageError(f"{gaps} grid nodes lie outside every ball of radius {r:.4g}")
    return BallCovering(model, centers, float(r), grid, mult, mult2, inc, inc2,
                        {"lattice": centers.meta.get("lattice")})


def covering_chain_audit(f: EigenfunctionField, covering: BallCovering, p=None) -> AuditReport:
    """Evaluate the three steps of the covering chain for one field.

    Returns ratios
      (i)   sum_l ||f||_{L^p(B_r(x_l))}^p / ||f||_p^p               (>= 1)
      (ii)  sum_l ||f||_{L^2(B_2r(x_l))}^2 / ||f||_2^2              (<= A)
      (iii) sum_l ||f||_{L^2(B_2r)}^p /
            (sup_l ||f||_{L^2(B_2r)}^(p-2) * sum_l ||f||_{L^2(B_2r)}^2)   (<= 1)
    all computed from the field's samples on the covering grid.
    """
    p = critical_exponent(f.model.n) if p is None else float(p)
    if not p > 2:
        raise ParameterError("the chain audit needs p > 2")
    g = covering.grid
    samples = f.samples if f.grid is g else f.on_grid(g).samples
    a2 = g.weights * np.abs(samples) ** 2
    ap = g.weights * np.abs(samples) ** p
    lp_p = float(ap.sum())
    l2_2 = float(a2.sum())
    ball_lp_p = covering.incidence @ ap
    ball2_l2_2 = covering.doubled_incidence @ a2
    ball2_l2 = np.sqrt(ball2_l2_2)
    step1 = float(ball_lp_p.sum())
    step2 = float(ball2_l2_2.sum())
    lhs3 = float(np.sum(ball2_l2**p))
    rhs3 = float(ball2_l2.max() ** (p - 2) * step2)
    ratios = {
        "subadditivity": step1 / lp_p if lp_p > 0 else 1.0,
        "overlap": step2 / l2_2 if l2_2 > 0 else 0.0,
        "sup_factor": lhs3 / rhs3 if rhs3 > 0 else 0.0,
    }
    points = [{"step": k, "ratio": v} for k, v in ratios.items()]
    return AuditReport(
        "covering_chain",
        points,
        max(ratios.values()),
        {
            "field": f.label,
            "lam": f.lam,
            "p": p,
            "r": covering.r,
            "count": covering.count,
            "covering_constant_A": covering.overlap,
            "resolution": g.resolution,
        },
    )
