"""Slow, independent reference computations used to check the fast paths.

Nothing here is used by the fitting code itself.  The routines favour
directness over speed: recursive basis evaluation, knot insertion one knot at
a time, truncation by explicit support enumeration, dense eigen-solves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .bspline import KnotVector, TensorSpace


def cox_de_boor(t, p: int, j: int, x: float, deriv: int = 0) -> float:
    """Value (or derivative) of the ``j``-th B-spline of degree ``p`` on knots ``t``.

    Uses half-open spans, except that the last nonempty span is closed so that
    clamped bases stay a partition of unity at the right end.
    """
    if deriv > 0:
        if p == 0:
            return 0.0
        out = 0.0
        d1 = t[j + p] - t[j]
        d2 = t[j + p + 1] - t[j + 1]
        if d1 > 0:
            out += p / d1 * cox_de_boor(t, p - 1, j, x, deriv - 1)
        if d2 > 0:
            out -= p / d2 * cox_de_boor(t, p - 1, j + 1, x, deriv - 1)
        return out
    if p == 0:
        if t[j] <= x < t[j + 1]:
            return 1.0
        return 1.0 if (x == t[-1] and t[j] < t[j + 1] == t[-1]) else 0.0
    out = 0.0
    d1 = t[j + p] - t[j]
    d2 = t[j + p + 1] - t[j + 1]
    if d1 > 0:
        out += (x - t[j]) / d1 * cox_de_boor(t, p - 1, j, x)
    if d2 > 0:
        out += (t[j + p + 1] - x) / d2 * cox_de_boor(t, p - 1, j + 1, x)
    return out


def basis_value(kv: KnotVector, j: int, x: float, deriv: int = 0) -> float:
    """Univariate basis function ``j`` of a (possibly periodic) knot vector."""
    if not kv.periodic:
        return cox_de_boor(kv.knots, kv.degree, j, x, deriv)
    # periodic function j is the sum of its unrolled copies on the extended knots
    x = float(kv.wrap(x))
    t, p, n = kv.knots, kv.degree, kv.ncells
    total = 0.0
    for jj in range(n + p):
        if jj % n == j:
            total += cox_de_boor(t, p, jj, x, deriv)
    return total


def tensor_value(space: TensorSpace, J, x, deriv=(0, 0)) -> float:
    return (basis_value(space.u, J[0], x[0], deriv[0])
            * basis_value(space.v, J[1], x[1], deriv[1]))


def knot_insertion_matrix(t, p: int, new_knots) -> np.ndarray:
    """Refinement matrix obtained by inserting knots one at a time (Boehm).

    Returns ``R`` with ``B_j(old) = sum_k R[k, j] B_k(new)``.
    """
    t = list(map(float, t))
    n = len(t) - p - 1
    P = np.eye(n)
    for x in new_knots:
        mu = max(k for k in range(len(t) - 1) if t[k] <= x < t[k + 1])
        m = P.shape[0]
        Q = np.zeros((m + 1, P.shape[1]))
        for i in range(m + 1):
            if i <= mu - p:
                Q[i] = P[i]
            elif i >= mu + 1:
                Q[i] = P[i - 1]
            else:
                a = (x - t[i]) / (t[i + p] - t[i])
                Q[i] = a * P[i] + (1 - a) * P[i - 1]
        t.insert(mu + 1, x)
        P = Q
    return P


@lru_cache(maxsize=None)
def refinement_matrix(kv: KnotVector) -> np.ndarray:
    """Dyadic refinement matrix of ``kv`` by an independent route.

    Clamped: insert every midpoint with :func:`knot_insertion_matrix`.
    Periodic: least-squares fit of each coarse function by the fine basis from
    recursive point evaluations.
    """
    if not kv.periodic:
        bp = kv.breakpoints
        mids = 0.5 * (bp[:-1] + bp[1:])
        return knot_insertion_matrix(kv.knots, kv.degree, mids)
    fine = kv.refine()
    xs = np.linspace(kv.lo, kv.hi, 8 * fine.ncells * (kv.degree + 1), endpoint=False)
    Bf = np.array([[basis_value(fine, k, x) for k in range(fine.dim)] for x in xs])
    Bc = np.array([[basis_value(kv, j, x) for j in range(kv.dim)] for x in xs])
    R, *_ = np.linalg.lstsq(Bf, Bc, rcond=None)
    R[np.abs(R) < 1e-13] = 0.0
    return R


@lru_cache(maxsize=None)
def _support_1d(kv: KnotVector) -> tuple[frozenset, ...]:
    bp = kv.breakpoints
    centres = 0.5 * (bp[:-1] + bp[1:])
    return tuple(frozenset(i for i, c in enumerate(centres) if basis_value(kv, j, c) != 0.0)
                 for j in range(kv.dim))


def support_cell_set(space: TensorSpace, J) -> set[tuple[int, int]]:
    """Cells where ``B_J`` is not identically zero, by sampling cell centres."""
    su = _support_1d(space.u)[J[0]]
    sv = _support_1d(space.v)[J[1]]
    return {(i, j) for i in su for j in sv}


def domain_cells(mesh, level: int) -> set[tuple[int, int]]:
    """Level-``level`` cells of ``Omega^level`` rebuilt from the active cells."""
    out = set()
    for lev in range(level, mesh.nlevels):
        shift = lev - level
        for i, j in mesh.active_cells(lev):
            out.add((i >> shift, j >> shift))
    return out


def brute_active_indices(mesh) -> dict[int, set[tuple[int, int]]]:
    out = {}
    for lev, sp in enumerate(mesh.spaces):
        here = domain_cells(mesh, lev)
        deeper = {(i >> 1, j >> 1) for i, j in domain_cells(mesh, lev + 1)} \
            if lev + 1 < mesh.nlevels else set()
        out[lev] = set()
        for a in range(sp.shape[0]):
            for b in range(sp.shape[1]):
                supp = support_cell_set(sp, (a, b))
                if supp <= here and not supp <= deeper:
                    out[lev].add((a, b))
    return out


def finest_expansion(mesh, level: int, J) -> dict[tuple[int, int], float]:
    """Coefficients of ``T_J^level`` in the finest-level basis of ``mesh``."""
    cur = {tuple(J): 1.0}
    for k in range(level + 1, mesh.nlevels):
        sp = mesh.spaces[k - 1]
        Ru = refinement_matrix(sp.u)
        Rv = refinement_matrix(sp.v)
        fine: dict[tuple[int, int], float] = {}
        for (a, b), c in cur.items():
            for ka in np.flatnonzero(Ru[:, a]):
                for kb in np.flatnonzero(Rv[:, b]):
                    key = (int(ka), int(kb))
                    fine[key] = fine.get(key, 0.0) + c * Ru[ka, a] * Rv[kb, b]
        omega = domain_cells(mesh, k)
        spk = mesh.spaces[k]
        cur = {K: c for K, c in fine.items() if not support_cell_set(spk, K) <= omega}
    return cur


def expand_surface(mesh, coefficients: dict) -> np.ndarray:
    """Dense finest-level coefficient array of a hierarchical spline."""
    top = mesh.spaces[-1]
    dim = len(next(iter(coefficients.values())))
    out = np.zeros(top.shape + (dim,))
    for (lev, J), lam in coefficients.items():
        for K, c in finest_expansion(mesh, lev, J).items():
            out[K] += c * np.asarray(lam)
    return out


def eval_expansion(space: TensorSpace, coeffs: np.ndarray, pts) -> np.ndarray:
    """Evaluate a dense single-level coefficient array at points."""
    iu, iv, vals = space.eval_basis(pts)
    c = coeffs[iu[:, :, None], iv[:, None, :]]
    return np.einsum("nab,nab...->n...", vals, c)


@dataclass
class DenseQuadraticProblem:
    """Minimize ``c^T Q c - 2 b^T c``; ``b`` may hold several right-hand sides."""

    Q: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        self.b = np.asarray(self.b, dtype=float)


@dataclass
class BruteResult:
    coefficients: np.ndarray
    min_eigenvalue: float
    degenerate: bool


def brute_minimize(problem: DenseQuadraticProblem, rtol: float = 1e-12) -> BruteResult:
    """Minimizer through a full eigen-decomposition; pseudo-inverse when singular."""
    Q = 0.5 * (problem.Q + problem.Q.T)
    w, V = np.linalg.eigh(Q)
    scale = max(abs(w).max(), np.finfo(float).tiny)
    keep = w > rtol * scale
    coef = V[:, keep] @ ((V[:, keep].T @ problem.b) / (w[keep][:, None] if problem.b.ndim > 1
                                                       else w[keep]))
    return BruteResult(coef, float(w[0]), bool(not keep.all()))


def linear_coefficients(space: TensorSpace, a: float, b: float, c: float) -> np.ndarray:
    """B-spline coefficients of ``a*u + b*v + c`` (Greville-abscissa values).

    Exact for clamped spaces; a periodic space only reproduces ``a == 0``.
    """
    gu = greville(space.u)
    gv = greville(space.v)
    return a * gu[:, None] + b * gv[None, :] + c


def greville(kv: KnotVector) -> np.ndarray:
    t, p = kv.knots, kv.degree
    return np.array([t[j + 1:j + p + 1].mean() for j in range(kv.dim)])


def brute_mark_cells(mesh, params: np.ndarray, errors: np.ndarray, epsilon: float,
                     n_loc: int, n1: int, n2: int):
    """Marking by a plain loop over levels, active mothers, and sites."""
    from .bspline import CellBox
    need = math.ceil(n_loc / (n1 * n2))
    active = brute_active_indices(mesh)
    marked = set()
    for lev, sp in enumerate(mesh.spaces):
        act_cells = mesh.active_cells(lev)
        cell_u = sp.u.cell_of(params[:, 0])
        cell_v = sp.v.cell_of(params[:, 1])
        for J in active[lev]:
            supp = support_cell_set(sp, J)
            inside = [i for i in range(len(params)) if (int(cell_u[i]), int(cell_v[i])) in supp]
            if not any(errors[i] > epsilon for i in inside):
                continue
            # subrectangles of the support, in cell-unrolled coordinates
            us = sorted({c[0] for c in supp})
            vs = sorted({c[1] for c in supp})
            ncu = sp.cell_shape[0]
            if sp.periodic and len(us) < ncu:
                start = next(u for u in us if (u - 1) % ncu not in us)
            else:
                start = us[0]
            width = len(us)
            counts = np.zeros((n1, n2), dtype=int)
            for i in inside:
                s = (float(params[i, 0]) - sp.u.breakpoints[start]) % (sp.u.hi - sp.u.lo) \
                    if sp.periodic else float(params[i, 0]) - sp.u.breakpoints[start]
                a = min(int(s / (width * sp.u.h) * n1), n1 - 1)
                r = float(params[i, 1]) - sp.v.breakpoints[vs[0]]
                b = min(int(r / (len(vs) * sp.v.h) * n2), n2 - 1)
                counts[a, b] += 1
            if (counts >= need).all():
                for cell in supp:
                    if cell in act_cells:
                        marked.add(CellBox(lev, *cell))
    return marked


@dataclass
class BaselineLevel:
    level: int
    dof: int
    within_fraction: float
    max_error: float


def uniform_baseline(cloud, config, stop_at_eta: bool = False) -> list[BaselineLevel]:
    """Stage one plus plain tensor-product quasi-interpolation on uniform grids."""
    from .local_fit import StageOne

    space = config.base_space()
    cloud = cloud.wrapped(space)
    out = []
    for lev in range(config.max_levels):
        stage = StageOne(cloud, config.local)
        coeffs = np.zeros(space.shape + (3,))
        for a in range(space.shape[0]):
            for b in range(space.shape[1]):
                coeffs[a, b] = stage.coefficient(space, (a, b)).coefficient
        err = np.linalg.norm(eval_expansion(space, coeffs, cloud.params) - cloud.points, axis=1)
        within = float(np.mean(err <= config.epsilon))
        out.append(BaselineLevel(lev, space.dim, within, float(err.max())))
        if stop_at_eta and within >= config.eta:
            break
        space = space.refine()
    return out
