"""Local smoothing-spline fits that supply the quasi-interpolation coefficients.

For a mother B-spline ``B_J`` of some level, data are gathered from a box of
level cells that starts at the support of ``B_J`` and grows ring by ring until
it holds enough sites (and, optionally, until enough of its cells are
occupied).  A spline in the span of the level B-splines not vanishing on the
box is fitted by minimizing squared residuals plus ``mu`` times the thin-plate
energy, and the coefficient of ``B_J`` is returned.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg

from .bspline import KnotVector, TensorSpace

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Data points ``points[i]`` (3D, meters) with parameters ``params[i]`` (2D)."""

    points: np.ndarray
    params: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=float)
        prm = np.ascontiguousarray(self.params, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("points must have shape (n, 3)")
        if prm.ndim != 2 or prm.shape[1] != 2 or prm.shape[0] != pts.shape[0]:
            raise ValueError("params must have shape (n, 2) matching points")
        if pts.shape[0] == 0:
            raise ValueError("empty point cloud")
        pts.flags.writeable = False
        prm.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "params", prm)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def bbox_diagonal(self) -> float:
        ext = self.points.max(axis=0) - self.points.min(axis=0)
        return float(np.linalg.norm(ext))

    def wrapped(self, space: TensorSpace) -> PointCloud:
        """Same cloud with periodic parameters mapped to the fundamental interval."""
        if not space.periodic:
            return self
        prm = self.params.copy()
        prm[:, 0] = space.u.wrap(prm[:, 0])
        return PointCloud(self.points, prm)


@dataclass(frozen=True)
class LocalFitParams:
    mu: float = 1e-6
    n_min: int = 12
    delta: float = 0.0
    tau_col: float = 1e-10

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.n_min < 3:
            raise ValueError("n_min must be at least 3")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")
        if not self.tau_col >= 0:
            raise ValueError("tau_col must be non-negative")


class CellIndex:
    """The sites of a cloud binned by the cells of one level."""

    def __init__(self, space: TensorSpace, params: np.ndarray):
        self.space = space
        nu, nv = space.cell_shape
        cu = space.u.cell_of(params[:, 0])
        cv = space.v.cell_of(params[:, 1])
        lin = cu * nv + cv
        self.order = np.argsort(lin, kind="stable")
        self.starts = np.searchsorted(lin[self.order], np.arange(nu * nv + 1))
        counts = np.bincount(lin, minlength=nu * nv).reshape(nu, nv)
        self.counts = counts
        self._cum = _prefix(counts)
        self._occ = _prefix((counts > 0).astype(np.int64))

    def rows(self, box) -> list[tuple[int, int]]:
        """Contiguous u-cell ranges ``[r0, r1)`` covered by ``box``."""
        i0, wu = box[0], box[1]
        nu = self.space.cell_shape[0]
        if i0 + wu <= nu:
            return [(i0, i0 + wu)]
        return [(i0, nu), (0, i0 + wu - nu)]

    def _boxsum(self, cum, box) -> int:
        j0, j1 = box[2], box[2] + box[3]
        return int(sum(cum[r1, j1] - cum[r0, j1] - cum[r1, j0] + cum[r0, j0]
                       for r0, r1 in self.rows(box)))

    def count(self, box) -> int:
        return self._boxsum(self._cum, box)

    def occupied(self, box) -> int:
        return self._boxsum(self._occ, box)

    def points(self, box) -> np.ndarray:
        nv = self.space.cell_shape[1]
        j0, wv = box[2], box[3]
        parts = []
        for r0, r1 in self.rows(box):
            for r in range(r0, r1):
                a, b = self.starts[r * nv + j0], self.starts[r * nv + j0 + wv]
                if b > a:
                    parts.append(self.order[a:b])
        if not parts:
            return np.zeros(0, dtype=np.intp)
        return np.concatenate(parts)


def _prefix(a: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0] + 1, a.shape[1] + 1), dtype=np.int64)
    out[1:, 1:] = a.cumsum(0).cumsum(1)
    return out


def support_box(space: TensorSpace, J) -> tuple[int, int, int, int]:
    """Cell box ``(i0, wu, j0, wv)`` of the support of ``B_J``, clipped or wrapped."""
    pu, pv = space.degree
    nu, nv = space.cell_shape
    if space.periodic:
        wu = min(pu + 1, nu)
        i0 = (J[0] - pu) % nu if wu < nu else 0
    else:
        i0 = max(0, J[0] - pu)
        wu = min(nu - 1, J[0]) - i0 + 1
    j0 = max(0, J[1] - pv)
    wv = min(nv - 1, J[1]) - j0 + 1
    return i0, wu, j0, wv


def grow_box(space: TensorSpace, box) -> tuple[int, int, int, int]:
    """Add the ring of cells surrounding ``box`` (clipped, wrapped in u)."""
    i0, wu, j0, wv = box
    nu, nv = space.cell_shape
    if space.periodic:
        wu += 2
        i0 = (i0 - 1) % nu
        if wu >= nu:
            i0, wu = 0, nu
    else:
        i1 = min(nu - 1, i0 + wu)
        i0 = max(0, i0 - 1)
        wu = i1 - i0 + 1
    j1 = min(nv - 1, j0 + wv)
    j0 = max(0, j0 - 1)
    return i0, wu, j0, j1 - j0 + 1


@dataclass
class LocalProblem:
    """Data and spline space of the local fit attached to one mother."""

    space: TensorSpace
    mother: tuple[int, tuple[int, int]]
    box: tuple[int, int, int, int]
    point_ids: np.ndarray
    rings: int = 0
    density_rings: int = 0
    warnings: list[str] = field(default_factory=list)

    @property
    def functions(self) -> tuple[np.ndarray, np.ndarray]:
        """Global u and v indices spanning the local space, in local order."""
        return (_dir_functions(self.space.u, self.box[0], self.box[1]),
                _dir_functions(self.space.v, self.box[2], self.box[3]))

    @property
    def n_local(self) -> int:
        fu, fv = self.functions
        return fu.size * fv.size

    @property
    def mother_position(self) -> int:
        fu, fv = self.functions
        J = self.mother[1]
        a = int(np.flatnonzero(fu == J[0])[0])
        b = int(np.flatnonzero(fv == J[1])[0])
        return a * fv.size + b

    def box_area(self) -> float:
        hu, hv = self.space.u.h, self.space.v.h
        return self.box[1] * hu * self.box[3] * hv


def _dir_functions(kv: KnotVector, i0: int, w: int) -> np.ndarray:
    p, n = kv.degree, kv.dim
    if kv.periodic:
        if w + p >= n:
            return np.arange(n)
        return (i0 + np.arange(w + p)) % n
    return np.arange(i0, i0 + w + p)


def _local_map(kv: KnotVector, funcs: np.ndarray) -> np.ndarray:
    m = np.full(kv.dim, -1, dtype=np.intp)
    m[funcs] = np.arange(funcs.size)
    return m


@lru_cache(maxsize=4096)
def _gram_1d(kv: KnotVector, i0: int, w: int) -> np.ndarray:
    """``G[k, a, b] = integral over the box of N_a^(k) N_b^(k)``, k = 0, 1, 2."""
    p = kv.degree
    funcs = _dir_functions(kv, i0, w)
    lmap = _local_map(kv, funcs)
    nodes, weights = np.polynomial.legendre.leggauss(p + 1)
    cells = (i0 + np.arange(w)) % kv.ncells if kv.periodic else i0 + np.arange(w)
    bp = kv.breakpoints
    lo, hi = bp[cells], bp[cells + 1]
    x = (0.5 * (hi - lo)[:, None] * (nodes + 1.0) + lo[:, None]).ravel()
    wt = (0.5 * (hi - lo)[:, None] * weights).ravel()
    # evaluate inside each cell so that cell attribution matches the quadrature cell
    idx, vals = kv.basis(x, 2)
    loc = lmap[idx]
    L = funcs.size
    G = np.zeros((3, L, L))
    for k in range(3):
        contrib = wt[:, None, None] * vals[k][:, :, None] * vals[k][:, None, :]
        np.add.at(G[k], (loc[:, :, None], loc[:, None, :]), contrib)
    # rounding of the two product orders differs; make symmetry exact
    G = 0.5 * (G + G.transpose(0, 2, 1))
    G.flags.writeable = False
    return G


def thin_plate_matrix(problem: LocalProblem) -> np.ndarray:
    """Thin-plate energy matrix of the local space over the problem's box."""
    sp = problem.space
    Gu = _gram_1d(sp.u, problem.box[0], problem.box[1])
    Gv = _gram_1d(sp.v, problem.box[2], problem.box[3])
    return np.kron(Gu[2], Gv[0]) + 2.0 * np.kron(Gu[1], Gv[1]) + np.kron(Gu[0], Gv[2])


def collinear(sites, tau_col: float = 1e-10) -> bool:
    """Whether the 2D sites lie (numerically) on one straight line."""
    X = np.asarray(sites, dtype=float).reshape(-1, 2)
    if X.shape[0] <= 2:
        return True
    s = np.linalg.svd(X - X.mean(axis=0), compute_uv=False)
    return bool(s[1] <= tau_col * (s[0] + np.finfo(float).tiny))


class LevelData:
    """Per-level caches shared by all local problems of one cloud."""

    def __init__(self, cloud: PointCloud, space: TensorSpace):
        self.space = space
        self.index = CellIndex(space, cloud.params)
        self.iu, bu = space.u.basis(cloud.params[:, 0])
        self.iv, bv = space.v.basis(cloud.params[:, 1])
        self.bu, self.bv = bu[0], bv[0]


class StageOne:
    """Computes quasi-interpolation coefficients for mothers of any level."""

    def __init__(self, cloud: PointCloud, params: LocalFitParams):
        self.cloud = cloud
        self.params = params
        self._levels: dict[TensorSpace, LevelData] = {}

    def level_data(self, space: TensorSpace) -> LevelData:
        data = self._levels.get(space)
        if data is None:
            data = self._levels[space] = LevelData(self.cloud, space)
        return data

    def gather(self, space: TensorSpace, J) -> LocalProblem:
        J = (int(J[0]), int(J[1]))
        index = self.level_data(space).index
        p = self.params
        box = support_box(space, J)
        prob = LocalProblem(space, (space.level, J), box, np.zeros(0, dtype=np.intp))
        count = index.count(box)
        while count < p.n_min:
            nxt = grow_box(space, box)
            if nxt == box:
                prob.warnings.append(
                    f"only {count} sites available, fewer than n_min={p.n_min}")
                break
            box = nxt
            prob.rings += 1
            count = index.count(box)
        if p.delta > 0:
            while index.occupied(box) < p.delta * box[1] * box[3]:
                nxt = grow_box(space, box)
                if nxt == box:
                    break
                box = nxt
                prob.density_rings += 1
        prob.box = box
        prob.point_ids = index.points(box)
        return prob

    def system(self, prob: LocalProblem):
        """Collocation matrix, energy matrix and data of a local problem."""
        data = self.level_data(prob.space)
        ids = prob.point_ids
        fu, fv = prob.functions
        mu_ = _local_map(prob.space.u, fu)[data.iu[ids]]
        mv_ = _local_map(prob.space.v, fv)[data.iv[ids]]
        cols = (mu_[:, :, None] * fv.size + mv_[:, None, :]).reshape(ids.size, -1)
        vals = (data.bu[ids][:, :, None] * data.bv[ids][:, None, :]).reshape(ids.size, -1)
        A = np.zeros((ids.size, fu.size * fv.size))
        np.put_along_axis(A, cols, vals, axis=1)
        return A, thin_plate_matrix(prob), self.cloud.points[ids]

    def local_sites(self, prob: LocalProblem) -> np.ndarray:
        """Sites of the problem with periodic u unrolled from the box start."""
        X = self.cloud.params[prob.point_ids]
        sp = prob.space
        if sp.periodic and prob.box[1] < sp.cell_shape[0]:
            start = sp.u.breakpoints[prob.box[0]]
            X = X.copy()
            X[:, 0] = start + np.mod(X[:, 0] - start, sp.u.hi - sp.u.lo)
        return X

    def solve(self, prob: LocalProblem) -> LocalSolution:
        p = self.params
        F = self.cloud.points[prob.point_ids]
        diag = LocalDiagnostics(n_points=int(prob.point_ids.size), rings=prob.rings,
                                density_rings=prob.density_rings,
                                warnings=list(prob.warnings))
        if collinear(self.local_sites(prob), p.tau_col):
            diag.collinear = True
            diag.fallback = True
            return LocalSolution(F.mean(axis=0), diag)
        A, M, F = self.system(prob)
        Q = A.T @ A + p.mu * M
        try:
            factor = scipy.linalg.cho_factor(Q, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            diag.factorized = False
            diag.fallback = True
            diag.warnings.append("factorization failed on non-collinear sites; "
                                 "falling back to the mean (tau_col may be too tight)")
            log.warning("local fit %s: factorization failed", prob.mother)
            return LocalSolution(F.mean(axis=0), diag)
        c = scipy.linalg.cho_solve(factor, A.T @ F, check_finite=False)
        return LocalSolution(c[prob.mother_position].copy(), diag, c)

    def coefficient(self, space: TensorSpace, J) -> LocalSolution:
        return self.solve(self.gather(space, J))


@dataclass
class LocalDiagnostics:
    n_points: int
    rings: int = 0
    density_rings: int = 0
    collinear: bool = False
    fallback: bool = False
    factorized: bool = True
    warnings: list[str] = field(default_factory=list)

    @property
    def enlarged(self) -> bool:
        return self.rings + self.density_rings > 0


@dataclass
class LocalSolution:
    coefficient: np.ndarray
    diagnostics: LocalDiagnostics
    local_coefficients: np.ndarray | None = None


def gather_local_data(cloud: PointCloud, mesh, mother, params: LocalFitParams) -> LocalProblem:
    """Local data set of ``mother = (level, J)`` on a hierarchical mesh."""
    level, J = mother
    if (level, tuple(J)) not in mesh.active:
        raise ValueError(f"{mother} is not an active mother")
    return StageOne(cloud, params).gather(mesh.spaces[level], J)


def solve_local(problem: LocalProblem, cloud: PointCloud, params: LocalFitParams) -> LocalSolution:
    return StageOne(cloud, params).solve(problem)
