"""Adaptive hierarchical quasi-interpolation of scattered data."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .bspline import CellBox, TensorSpace
from .hierarchy import HierarchicalMesh, ThbFunction, support_any, support_sum, truncate
from .local_fit import LocalDiagnostics, LocalFitParams, PointCloud, StageOne, support_box

log = logging.getLogger(__name__)

Key = tuple[int, tuple[int, int]]

CONVERGED = "converged"
LEVEL_CAP = "level-cap"
NO_CELLS_MARKED = "no-cells-marked"


@dataclass(frozen=True)
class FitConfig:
    """Tuning parameters of the adaptive fit.

    ``epsilon`` is in the units of the data (meters).  ``eta`` is the fraction
    of sites whose error must be within ``epsilon``.
    """

    degree: tuple[int, int] = (3, 3)
    cells: tuple[int, int] = (4, 4)
    periodic_u: bool = False
    domain: tuple[tuple[float, float], tuple[float, float]] = ((0.0, 1.0), (0.0, 1.0))
    epsilon: float = 5e-5
    eta: float = 0.95
    max_levels: int = 8
    n_loc: int = 20
    n1: int = 1
    n2: int = 1
    local: LocalFitParams = field(default_factory=LocalFitParams)

    def __post_init__(self):
        if any(not 1 <= d <= 4 for d in self.degree):
            raise ValueError("degrees must lie in 1..4")
        if any(c < 1 for c in self.cells):
            raise ValueError("initial grid needs at least one cell per direction")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must lie in (0, 1]")
        if self.max_levels < 1:
            raise ValueError("max_levels must be at least 1")
        if self.n_loc < 3:
            raise ValueError("n_loc must be at least 3")
        if self.n_loc < self.local.n_min:
            raise ValueError("n_loc must be at least n_min")
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("n1 and n2 must be positive")
        if self.periodic_u and self.cells[0] < self.degree[0] + 1:
            raise ValueError("periodic direction needs at least degree + 1 cells")
        (a, b), (c, d) = self.domain
        if not (b > a and d > c):
            raise ValueError("empty parametric domain")

    def base_space(self) -> TensorSpace:
        return TensorSpace.uniform(self.degree, self.cells, self.periodic_u, self.domain)


class HierarchicalSurface:
    """Vector-valued spline ``s = sum lambda_J^l T_J^l`` on a hierarchical mesh."""

    def __init__(self, mesh: HierarchicalMesh, coefficients: dict[Key, np.ndarray]):
        keys = set(mesh.active)
        if set(coefficients) != keys:
            missing = len(keys - set(coefficients))
            extra = len(set(coefficients) - keys)
            raise ValueError(f"coefficients do not match active set "
                             f"({missing} missing, {extra} extra)")
        self.mesh = mesh
        self.coefficients = coefficients
        self._thb: dict[Key, ThbFunction] = {}

    @property
    def dim(self) -> int:
        return len(next(iter(self.coefficients.values())))

    def thb(self, level: int, J) -> ThbFunction:
        key = (level, (int(J[0]), int(J[1])))
        f = self._thb.get(key)
        if f is None:
            f = self._thb[key] = truncate(self.mesh, key)
        return f

    @cached_property
    def level_coefficients(self) -> list[np.ndarray]:
        """Coefficients of ``s`` restricted to each level's active region.

        On an active cell of level ``k`` the surface coincides with the level-``k``
        spline built here by truncating the coarser contribution and adding the
        level-``k`` active coefficients.
        """
        mesh = self.mesh
        out = []
        g = None
        for lev, sp in enumerate(mesh.spaces):
            if g is None:
                g = np.zeros(sp.shape + (self.dim,))
            else:
                prev = mesh.spaces[lev - 1]
                g = np.einsum("ai,ijc,bj->abc", prev.u.refinement_matrix, g,
                              prev.v.refinement_matrix)
                g[mesh.inside_masks[lev]] = 0.0
            for J in mesh.active.indices(lev):
                g[J] = self.coefficients[(lev, J)]
            out.append(g)
        return out

    def evaluate(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        level, _, _ = self.mesh.locate(pts)
        out = np.zeros((pts.shape[0], self.dim))
        for lev in np.unique(level):
            sel = np.flatnonzero(level == lev)
            sp = self.mesh.spaces[lev]
            iu, iv, vals = sp.eval_basis(pts[sel])
            c = self.level_coefficients[lev][iu[:, :, None], iv[:, None, :]]
            out[sel] = np.einsum("nab,nabc->nc", vals, c)
        return out

    __call__ = evaluate


@dataclass
class IterationRecord:
    iteration: int
    levels: int
    dof: int
    within_fraction: float
    max_error: float
    marked_cells: int
    wall_time: float


@dataclass
class FitReport:
    epsilon: float
    eta: float
    bbox_diagonal: float
    iterations: list[IterationRecord] = field(default_factory=list)
    errors: np.ndarray | None = None
    termination: str = ""
    diagnostics: dict[Key, LocalDiagnostics] = field(default_factory=dict)

    @property
    def final(self) -> IterationRecord:
        return self.iterations[-1]

    def warnings(self) -> list[tuple[Key, str]]:
        return [(k, w) for k, d in sorted(self.diagnostics.items()) for w in d.warnings]

    def summary(self) -> dict:
        """Report contents minus timings, for comparisons between runs."""
        return {
            "termination": self.termination,
            "iterations": [(r.levels, r.dof, r.within_fraction, r.max_error, r.marked_cells)
                           for r in self.iterations],
            "errors": None if self.errors is None else self.errors.tobytes(),
        }


def evaluate_errors(surface: HierarchicalSurface, cloud: PointCloud) -> np.ndarray:
    """Euclidean distance between the surface at each site and its data point."""
    return np.linalg.norm(surface.evaluate(cloud.params) - cloud.points, axis=1)


def _subrect_ok(stage: StageOne, space: TensorSpace, J, n1: int, n2: int, need: int) -> bool:
    box = support_box(space, J)
    ids = stage.level_data(space).index.points(box)
    if ids.size < need * n1 * n2:
        return False
    X = stage.cloud.params[ids]
    u0 = space.u.breakpoints[box[0]]
    v0 = space.v.breakpoints[box[2]]
    du = space.u.h * box[1]
    dv = space.v.h * box[3]
    su = X[:, 0] - u0
    if space.periodic:
        su = np.mod(su, space.u.hi - space.u.lo)
    a = np.clip(np.floor(su / du * n1).astype(np.intp), 0, n1 - 1)
    b = np.clip(np.floor((X[:, 1] - v0) / dv * n2).astype(np.intp), 0, n2 - 1)
    counts = np.bincount(a * n2 + b, minlength=n1 * n2)
    return bool(np.all(counts >= need))


def mark_cells(surface: HierarchicalSurface, cloud: PointCloud, errors: np.ndarray,
               config: FitConfig, stage: StageOne | None = None) -> set[CellBox]:
    """Cells to refine: active cells under qualifying active mothers.

    A mother qualifies when its support holds a site with error above
    ``epsilon`` and each of the ``n1 x n2`` uniform subrectangles of its
    support holds at least ``ceil(n_loc / (n1 n2))`` sites.
    """
    mesh = surface.mesh
    stage = stage or StageOne(cloud, config.local)
    bad = errors > config.epsilon
    need = math.ceil(config.n_loc / (config.n1 * config.n2))
    marked: set[CellBox] = set()
    if not bad.any():
        return marked
    for lev, sp in enumerate(mesh.spaces):
        act = mesh.active.masks[lev]
        if not act.any():
            continue
        idx = stage.level_data(sp).index
        nu, nv = sp.cell_shape
        cu = sp.u.cell_of(cloud.params[bad, 0])
        cv = sp.v.cell_of(cloud.params[bad, 1])
        badcells = np.bincount(cu * nv + cv, minlength=nu * nv).reshape(nu, nv)
        cand = act & (support_sum(sp, badcells) > 0)
        if config.n1 == 1 and config.n2 == 1:
            qual = cand & (support_sum(sp, idx.counts) >= need)
        else:
            qual = np.zeros_like(cand)
            for J in np.argwhere(cand):
                qual[tuple(J)] = _subrect_ok(stage, sp, J, config.n1, config.n2, need)
        cells = support_any(sp, qual) & mesh.active_mask(lev)
        marked.update(CellBox(lev, int(i), int(j)) for i, j in np.argwhere(cells))
    return marked


def compute_coefficients(stage: StageOne, mesh: HierarchicalMesh, keys: list[Key],
                         threads: int = 1):
    """Stage-one coefficients for the given mothers; order-independent."""
    def work(key):
        lev, J = key
        return stage.coefficient(mesh.spaces[lev], J)

    if threads > 1 and len(keys) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            sols = list(pool.map(work, keys))
    else:
        sols = [work(k) for k in keys]
    return {k: s for k, s in zip(keys, sols)}


def fit(cloud: PointCloud, config: FitConfig, *, threads: int = 1,
        callback: Callable[[int, HierarchicalSurface], None] | None = None
        ) -> tuple[HierarchicalSurface, FitReport]:
    """Adaptive THB-spline fit of a parametrized point cloud.

    ``callback(iteration, surface)`` is invoked after each surface is built.
    """
    base = config.base_space()
    cloud = cloud.wrapped(base)
    (a, b), (c, d) = config.domain
    if (not base.periodic and (cloud.params[:, 0].min() < a or cloud.params[:, 0].max() > b)) \
            or cloud.params[:, 1].min() < c or cloud.params[:, 1].max() > d:
        from .bspline import DomainError
        raise DomainError("parameters outside the configured domain")

    stage = StageOne(cloud, config.local)
    mesh = HierarchicalMesh(base)
    report = FitReport(config.epsilon, config.eta, cloud.bbox_diagonal)
    coeffs: dict[Key, np.ndarray] = {}

    iteration = 0
    new_keys = list(mesh.active)
    marked_count = 0
    while True:
        t0 = time.perf_counter()
        sols = compute_coefficients(stage, mesh, new_keys, threads)
        active = set(mesh.active)
        coeffs = {k: v for k, v in coeffs.items() if k in active}
        for k, s in sols.items():
            coeffs[k] = s.coefficient
            report.diagnostics[k] = s.diagnostics
        surface = HierarchicalSurface(mesh, coeffs)
        errors = evaluate_errors(surface, cloud)
        within = float(np.mean(errors <= config.epsilon))
        report.iterations.append(IterationRecord(
            iteration, mesh.nlevels, mesh.active.dof, within, float(errors.max()),
            marked_count, time.perf_counter() - t0))
        report.errors = errors
        log.info("iteration %d: levels=%d dof=%d within=%.4f max=%.3e", iteration,
                 mesh.nlevels, mesh.active.dof, within, errors.max())
        if callback is not None:
            callback(iteration, surface)

        if within >= config.eta:
            report.termination = CONVERGED
            break
        if iteration >= config.max_levels:
            report.termination = LEVEL_CAP
            break
        marked = mark_cells(surface, cloud, errors, config, stage)
        if not marked:
            report.termination = NO_CELLS_MARKED
            break
        marked = {m for m in marked if m.level + 1 < config.max_levels}
        if not marked:
            report.termination = LEVEL_CAP
            break
        mesh = mesh.refine(marked)
        marked_count = len(marked)
        new_keys = [k for k in mesh.active if k not in coeffs]
        iteration += 1
    return surface, report
