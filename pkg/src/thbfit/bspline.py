"""Uniform dyadic B-spline spaces in one and two parametric directions.

Univariate spaces live on a uniform partition of ``[lo, hi]`` into ``ncells``
cells and are either open-clamped (end knots repeated ``degree + 1`` times) or
periodic (knots continued ``degree`` cells past each end, basis indices taken
modulo the cell count).

Indexing conventions shared by both boundary styles:

* cell ``c`` covers ``[lo + c*h, lo + (c+1)*h)``; the last cell is closed;
* basis function ``j`` is nonzero on cells ``j - degree, ..., j`` (clipped to
  ``[0, ncells)`` when clamped, taken modulo ``ncells`` when periodic);
* on cell ``c`` the nonzero functions are ``c, ..., c + degree``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import comb
from typing import NamedTuple

import numpy as np


class DomainError(ValueError):
    """A parameter lies outside the parametric domain."""


class CellBox(NamedTuple):
    """A cell ``(i, j)`` of the level-``level`` tensor grid."""

    level: int
    i: int
    j: int

    def children(self) -> list[CellBox]:
        i, j, lev = 2 * self.i, 2 * self.j, self.level + 1
        return [CellBox(lev, i, j), CellBox(lev, i + 1, j),
                CellBox(lev, i, j + 1), CellBox(lev, i + 1, j + 1)]


@dataclass(frozen=True)
class KnotVector:
    """Uniform knot vector of a univariate spline space.

    Parameters
    ----------
    degree : int
        Polynomial degree, 1 to 4.
    ncells : int
        Number of uniform cells between ``lo`` and ``hi``.
    lo, hi : float
        Interval bounds.
    periodic : bool
        Periodic knot extension instead of open-clamped end knots.
    """

    degree: int
    ncells: int
    lo: float = 0.0
    hi: float = 1.0
    periodic: bool = False

    def __post_init__(self):
        if not 1 <= self.degree <= 4:
            raise ValueError(f"degree must be in 1..4, got {self.degree}")
        if self.ncells < 1:
            raise ValueError("ncells must be positive")
        if not self.hi > self.lo:
            raise ValueError("empty interval")
        if self.periodic and self.ncells < self.degree + 1:
            raise ValueError("periodic space needs at least degree + 1 cells")

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / self.ncells

    @property
    def dim(self) -> int:
        return self.ncells if self.periodic else self.ncells + self.degree

    @cached_property
    def knots(self) -> np.ndarray:
        p, n = self.degree, self.ncells
        k = np.arange(-p, n + p + 1, dtype=float)
        t = self.lo + k * self.h
        t[p + n] = self.hi
        if not self.periodic:
            t[:p] = self.lo
            t[n + p + 1:] = self.hi
        return t

    @cached_property
    def breakpoints(self) -> np.ndarray:
        return self.knots[self.degree:self.degree + self.ncells + 1]

    def refine(self) -> KnotVector:
        """The space obtained by halving every cell."""
        return KnotVector(self.degree, 2 * self.ncells, self.lo, self.hi, self.periodic)

    def wrap(self, x):
        """Map ``x`` into ``[lo, hi)`` when periodic; identity otherwise."""
        if not self.periodic:
            return x
        period = self.hi - self.lo
        return self.lo + np.mod(np.asarray(x, dtype=float) - self.lo, period)

    def cell_of(self, x) -> np.ndarray:
        """Index of the half-open cell containing each ``x``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.periodic:
            x = self.wrap(x)
        elif np.any((x < self.lo) | (x > self.hi)) or np.any(np.isnan(x)):
            raise DomainError(f"parameter outside [{self.lo}, {self.hi}]")
        c = np.floor((x - self.lo) / self.h).astype(np.intp)
        return np.clip(c, 0, self.ncells - 1)

    def basis(self, x, nderiv: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Nonzero basis functions and derivatives at the points ``x``.

        Returns
        -------
        idx : (npts, degree+1) int array
            Global indices of the nonzero functions.
        vals : (nderiv+1, npts, degree+1) array
            ``vals[k]`` holds the ``k``-th derivatives.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        cells = self.cell_of(x)
        x = self.wrap(x)
        p = self.degree
        vals = _basis_ders(self.knots, p, cells + p, x, nderiv)
        idx = cells[:, None] + np.arange(p + 1)
        if self.periodic:
            idx %= self.ncells
        return idx, vals

    def support_cells(self, j: int) -> list[int]:
        """Cells on which function ``j`` is not identically zero."""
        p, n = self.degree, self.ncells
        if self.periodic:
            width = min(p + 1, n)
            return [(j - p + t) % n for t in range(width)]
        return list(range(max(0, j - p), min(n - 1, j) + 1))

    def two_scale(self, j: int) -> list[tuple[int, float]]:
        """Weights of function ``j`` in the basis of :meth:`refine`."""
        if self.periodic:
            p, nf = self.degree, 2 * self.ncells
            acc: dict[int, float] = {}
            for k in range(p + 2):
                kk = (2 * j - p + k) % nf
                acc[kk] = acc.get(kk, 0.0) + comb(p + 1, k) / 2.0 ** p
            return sorted(acc.items())
        col = self.refinement_matrix[:, j]
        nz = np.flatnonzero(col)
        return [(int(k), float(col[k])) for k in nz]

    @cached_property
    def refinement_matrix(self) -> np.ndarray:
        """Matrix ``R`` with ``B_j = sum_k R[k, j] * B^fine_k``."""
        fine = self.refine()
        if self.periodic:
            R = np.zeros((fine.dim, self.dim))
            for j in range(self.dim):
                for k, w in self.two_scale(j):
                    R[k, j] = w
            return R
        return _oslo_matrix(self.knots, fine.knots, self.degree)


def _basis_ders(t, p, span, x, nderiv):
    """Vectorized nonzero-basis derivative evaluation (de Boor triangle).

    ``span`` holds knot indices with ``t[span] <= x < t[span+1]``.
    """
    npts = x.shape[0]
    ndu = np.empty((p + 1, p + 1, npts))
    left = np.empty((p + 1, npts))
    right = np.empty((p + 1, npts))
    ndu[0, 0] = 1.0
    for j in range(1, p + 1):
        left[j] = x - t[span + 1 - j]
        right[j] = t[span + j] - x
        saved = np.zeros(npts)
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    ders = np.zeros((nderiv + 1, npts, p + 1))
    ders[0] = ndu[:, p].T
    if nderiv == 0:
        return ders
    a = np.empty((2, p + 1, npts))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[0, 0] = 1.0
        for k in range(1, min(nderiv, p) + 1):
            d = np.zeros(npts)
            rk, pk = r - k, p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d = d + a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d = d + a[s2, k] * ndu[r, pk]
            ders[k, :, r] = d
            s1, s2 = s2, s1
    fac = p
    for k in range(1, min(nderiv, p) + 1):
        ders[k] *= fac
        fac *= p - k
    return ders


def _oslo_matrix(t, tau, p):
    """Knot-refinement matrix from discrete B-splines (Oslo algorithm).

    ``R[i, j]`` is the discrete B-spline ``alpha_{j,p}(i)``: the weight of
    fine function ``i`` in coarse function ``j``.
    """
    n_c = len(t) - p - 1
    n_f = len(tau) - p - 1
    R = np.zeros((n_f, n_c))
    for i in range(n_f):
        mu = int(np.searchsorted(t, tau[i], side="right")) - 1
        mu = min(max(mu, p), n_c - 1)
        b = np.ones(1)
        for k in range(1, p + 1):
            x = tau[i + k]
            nb = np.zeros(k + 1)
            for r in range(k):
                lo, hi = t[mu + 1 + r - k], t[mu + 1 + r]
                nb[r] += b[r] * (hi - x) / (hi - lo)
                nb[r + 1] += b[r] * (x - lo) / (hi - lo)
            b = nb
        R[i, mu - p:mu + 1] = b
    return R


@dataclass(frozen=True)
class TensorSpace:
    """Tensor-product spline space of one hierarchy level."""

    u: KnotVector
    v: KnotVector
    level: int = 0

    def __post_init__(self):
        if self.v.periodic:
            raise ValueError("periodicity is supported in the u direction only")

    @classmethod
    def uniform(cls, degree=(3, 3), cells=(4, 4), periodic_u=False,
                domain=((0.0, 1.0), (0.0, 1.0))) -> TensorSpace:
        (a, b), (c, d) = domain
        return cls(KnotVector(degree[0], cells[0], a, b, periodic_u),
                   KnotVector(degree[1], cells[1], c, d))

    @property
    def degree(self) -> tuple[int, int]:
        return self.u.degree, self.v.degree

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.dim, self.v.dim

    @property
    def cell_shape(self) -> tuple[int, int]:
        return self.u.ncells, self.v.ncells

    @property
    def dim(self) -> int:
        return self.u.dim * self.v.dim

    @property
    def periodic(self) -> bool:
        return self.u.periodic

    def refine(self) -> TensorSpace:
        return TensorSpace(self.u.refine(), self.v.refine(), self.level + 1)

    def cell_rect(self, cell) -> tuple[float, float, float, float]:
        """``(u0, u1, v0, v1)`` of a cell of this level."""
        i, j = cell[-2], cell[-1]
        bu, bv = self.u.breakpoints, self.v.breakpoints
        return bu[i], bu[i + 1], bv[j], bv[j + 1]

    def eval_basis(self, pts, deriv=(0, 0)):
        """Vectorized nonzero tensor basis values at ``pts`` of shape (n, 2).

        Returns ``(iu, iv, vals)`` with ``vals[n, a, b]`` the value of the
        function ``(iu[n, a], iv[n, b])``.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        iu, bu = self.u.basis(pts[:, 0], deriv[0])
        iv, bv = self.v.basis(pts[:, 1], deriv[1])
        vals = bu[deriv[0]][:, :, None] * bv[deriv[1]][:, None, :]
        return iu, iv, vals

    def eval_nonzero_basis(self, x, deriv=(0, 0)) -> list[tuple[tuple[int, int], float]]:
        """Nonzero basis functions (or derivatives) at the single point ``x``."""
        iu, iv, vals = self.eval_basis([x], deriv)
        return [((int(iu[0, a]), int(iv[0, b])), float(vals[0, a, b]))
                for a in range(iu.shape[1]) for b in range(iv.shape[1])]

    def eval_function(self, J, pts, deriv=(0, 0)) -> np.ndarray:
        """Values of the single basis function ``J`` at ``pts``."""
        iu, iv, vals = self.eval_basis(pts, deriv)
        mu = iu == J[0]
        mv = iv == J[1]
        return np.einsum("na,nb,nab->n", mu, mv, vals)

    def two_scale(self, J) -> list[tuple[tuple[int, int], float]]:
        """Refinement weights of ``B_J`` in the next level's basis."""
        wu = self.u.two_scale(J[0])
        wv = self.v.two_scale(J[1])
        return [((ku, kv), a * b) for ku, a in wu for kv, b in wv]

    def support_cells(self, J) -> set[CellBox]:
        return {CellBox(self.level, i, j)
                for i in self.u.support_cells(J[0])
                for j in self.v.support_cells(J[1])}
