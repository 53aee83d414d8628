"""Hierarchical meshes and the truncated hierarchical B-spline basis.

A mesh with ``M`` levels stores, for each level ``l``, a boolean mask over the
level-``l`` cells marking the subdomain ``Omega^l`` (``Omega^0`` is the whole
domain and ``Omega^M`` is empty).  Active cells of level ``l`` are the cells of
``Omega^l`` that do not lie in ``Omega^{l+1}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .bspline import CellBox, TensorSpace


def _pad_cells(space: TensorSpace, mask: np.ndarray, fill) -> np.ndarray:
    """Pad a cell array so that function ``J`` reads the window at ``J``."""
    pu, pv = space.degree
    if space.periodic:
        mask = np.concatenate([mask[mask.shape[0] - pu:], mask], axis=0)
    else:
        mask = np.pad(mask, ((pu, pu), (0, 0)), constant_values=fill)
    return np.pad(mask, ((0, 0), (pv, pv)), constant_values=fill)


def support_all(space: TensorSpace, cellmask: np.ndarray) -> np.ndarray:
    """Functions whose support (clipped to the domain) lies inside ``cellmask``."""
    pu, pv = space.degree
    win = sliding_window_view(_pad_cells(space, cellmask, True), (pu + 1, pv + 1))
    return win.all(axis=(-2, -1))


def support_sum(space: TensorSpace, cellvals: np.ndarray) -> np.ndarray:
    """Sum of a per-cell quantity over each function's support."""
    pu, pv = space.degree
    win = sliding_window_view(_pad_cells(space, cellvals, 0), (pu + 1, pv + 1))
    return win.sum(axis=(-2, -1))


def support_any(space: TensorSpace, funcmask: np.ndarray) -> np.ndarray:
    """Cells lying in the support of at least one flagged function."""
    pu, pv = space.degree
    if space.periodic:
        funcmask = np.concatenate([funcmask, funcmask[:pu]], axis=0)
    win = sliding_window_view(funcmask, (pu + 1, pv + 1))
    return win.any(axis=(-2, -1))


class HierarchicalMesh:
    """Nested subdomains ``Omega^0 ⊇ ... ⊇ Omega^{M-1}`` over dyadic grids.

    Instances are treated as immutable; :meth:`refine` returns a new mesh.
    """

    def __init__(self, base: TensorSpace, domains: Iterable[np.ndarray] | None = None):
        if base.level != 0:
            base = TensorSpace(base.u, base.v, 0)
        doms = [np.ones(base.cell_shape, dtype=bool)] if domains is None else [
            np.asarray(d, dtype=bool) for d in domains]
        spaces = [base]
        for _ in range(1, len(doms)):
            spaces.append(spaces[-1].refine())
        for sp, d in zip(spaces, doms):
            if d.shape != sp.cell_shape:
                raise ValueError("domain mask shape does not match its level")
            d.flags.writeable = False
        if not doms[0].all():
            raise ValueError("Omega^0 must be the whole domain")
        self.spaces: tuple[TensorSpace, ...] = tuple(spaces)
        self._domains = tuple(doms)
        self._check()

    def _check(self):
        for lev in range(1, self.nlevels):
            d = self._domains[lev]
            # union of level-(l-1) cells, nested in Omega^{l-1}
            coarse = d[::2, ::2]
            if not (np.array_equal(np.repeat(np.repeat(coarse, 2, 0), 2, 1), d)
                    and np.all(self._domains[lev - 1][coarse])):
                raise ValueError(f"Omega^{lev} is not a nested union of coarse cells")

    @property
    def nlevels(self) -> int:
        return len(self.spaces)

    @property
    def base(self) -> TensorSpace:
        return self.spaces[0]

    def domain(self, level: int) -> np.ndarray:
        """Level-``level`` cells contained in ``Omega^level``."""
        if level >= self.nlevels:
            shape = self.base.cell_shape
            return np.zeros((shape[0] << level, shape[1] << level), dtype=bool)
        return self._domains[level]

    def refined_mask(self, level: int) -> np.ndarray:
        """Level-``level`` cells contained in ``Omega^{level+1}``."""
        if level + 1 >= self.nlevels:
            return np.zeros(self.spaces[level].cell_shape, dtype=bool)
        return self._domains[level + 1][::2, ::2]

    def active_mask(self, level: int) -> np.ndarray:
        return self._domains[level] & ~self.refined_mask(level)

    def active_cells(self, level: int) -> set[tuple[int, int]]:
        return {(int(i), int(j)) for i, j in np.argwhere(self.active_mask(level))}

    def active_cell_list(self) -> list[CellBox]:
        return [CellBox(lev, int(i), int(j)) for lev in range(self.nlevels)
                for i, j in np.argwhere(self.active_mask(lev))]

    @cached_property
    def inside_masks(self) -> tuple[np.ndarray, ...]:
        """Per level, functions whose support lies inside ``Omega^level``."""
        return tuple(support_all(sp, self._domains[lev]) for lev, sp in enumerate(self.spaces))

    @cached_property
    def active(self) -> ActiveIndexSet:
        return compute_active_indices(self)

    def locate(self, pts) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Level and cell coordinates of the active cell containing each point."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        n = pts.shape[0]
        level = np.full(n, -1, dtype=np.intp)
        ci = np.zeros(n, dtype=np.intp)
        cj = np.zeros(n, dtype=np.intp)
        for lev in range(self.nlevels - 1, -1, -1):
            todo = level < 0
            if not todo.any():
                break
            sp = self.spaces[lev]
            i = sp.u.cell_of(pts[todo, 0])
            j = sp.v.cell_of(pts[todo, 1])
            hit = self._domains[lev][i, j]
            idx = np.flatnonzero(todo)[hit]
            level[idx] = lev
            ci[idx] = i[hit]
            cj[idx] = j[hit]
        return level, ci, cj

    def refine(self, marked: Iterable[CellBox]) -> HierarchicalMesh:
        """Dyadically refine the marked active cells."""
        marked = list(marked)
        if not marked:
            return self
        top = max(c.level for c in marked)
        doms = [d.copy() for d in self._domains]
        if top + 1 >= self.nlevels:
            doms.append(np.zeros(self.spaces[-1].refine().cell_shape, dtype=bool))
        for c in marked:
            if not (0 <= c.level < self.nlevels) or not self.active_mask(c.level)[c.i, c.j]:
                raise ValueError(f"cannot refine inactive cell {tuple(c)}")
            doms[c.level + 1][2 * c.i:2 * c.i + 2, 2 * c.j:2 * c.j + 2] = True
        return HierarchicalMesh(self.base, doms)

    def to_dict(self) -> dict:
        """Plain-data description used by the mesh dump."""
        sp = self.base
        levels = []
        for lev, space in enumerate(self.spaces):
            cells = sorted(self.active_cells(lev))
            levels.append({
                "level": lev,
                "degree": list(space.degree),
                "cells": list(space.cell_shape),
                "n_active_cells": len(cells),
                "active_cells": [list(c) for c in cells],
            })
        return {
            "format": "thbfit-mesh/1",
            "degree": list(sp.degree),
            "periodic_u": sp.periodic,
            "domain": [[sp.u.lo, sp.u.hi], [sp.v.lo, sp.v.hi]],
            "n_levels": self.nlevels,
            "levels": levels,
            "dof": self.active.dof,
            "active_indices": [[lev, int(J[0]), int(J[1])] for lev, J in self.active],
        }


@dataclass
class ActiveIndexSet:
    """Per-level boolean masks over ``Gamma^l`` selecting the sets ``A^l``."""

    masks: list[np.ndarray]

    def indices(self, level: int) -> list[tuple[int, int]]:
        if level >= len(self.masks):
            return []
        return [(int(a), int(b)) for a, b in np.argwhere(self.masks[level])]

    def __iter__(self) -> Iterator[tuple[int, tuple[int, int]]]:
        for lev in range(len(self.masks)):
            for J in self.indices(lev):
                yield lev, J

    def __contains__(self, key) -> bool:
        lev, J = key
        return 0 <= lev < len(self.masks) and bool(self.masks[lev][J])

    def __len__(self) -> int:
        return self.dof

    @property
    def dof(self) -> int:
        return int(sum(m.sum() for m in self.masks))

    def counts(self) -> list[int]:
        return [int(m.sum()) for m in self.masks]


def compute_active_indices(mesh: HierarchicalMesh) -> ActiveIndexSet:
    masks = []
    for lev, sp in enumerate(mesh.spaces):
        inner = mesh.inside_masks[lev]
        deeper = support_all(sp, mesh.refined_mask(lev))
        masks.append(inner & ~deeper)
    return ActiveIndexSet(masks)


@dataclass
class ThbFunction:
    """Truncated basis function ``T = Trunc(B_J^level)``.

    ``kept[k]`` and ``removed[k]`` map level-``k`` multi-indices to the
    coefficients retained and discarded by the level-``k`` truncation step,
    so that ``B_J = kept[M-1] + sum_k removed[k]``.
    """

    level: int
    index: tuple[int, int]
    kept: dict[int, dict[tuple[int, int], float]] = field(default_factory=dict)
    removed: dict[int, dict[tuple[int, int], float]] = field(default_factory=dict)

    @property
    def is_truncated(self) -> bool:
        return any(self.removed.values())

    def finest(self) -> tuple[int, dict[tuple[int, int], float]]:
        """Level and coefficients of the representation at the finest level."""
        if not self.kept:
            return self.level, {self.index: 1.0}
        top = max(self.kept)
        return top, self.kept[top]


def truncate(mesh: HierarchicalMesh, mother: tuple[int, tuple[int, int]]) -> ThbFunction:
    level, J = mother
    J = (int(J[0]), int(J[1]))
    if (level, J) not in mesh.active:
        raise ValueError(f"{(level, J)} is not an active index")
    thb = ThbFunction(level, J)
    cur = {J: 1.0}
    for k in range(level + 1, mesh.nlevels):
        coarse = mesh.spaces[k - 1]
        fine: dict[tuple[int, int], float] = {}
        for K, c in cur.items():
            for K2, w in coarse.two_scale(K):
                fine[K2] = fine.get(K2, 0.0) + c * w
        inside = mesh.inside_masks[k]
        kept = {K: c for K, c in fine.items() if not inside[K]}
        thb.removed[k] = {K: c for K, c in fine.items() if inside[K]}
        thb.kept[k] = kept
        cur = kept
    return thb


def _lookup(coeffs: dict, iu: np.ndarray, iv: np.ndarray, nv: int) -> np.ndarray:
    """Coefficient of each (iu, iv) pair in a sparse map, zero when absent."""
    if not coeffs:
        return np.zeros(iu.shape[:1] + (iu.shape[1], iv.shape[1]))
    keys = np.array([a * nv + b for a, b in coeffs], dtype=np.int64)
    vals = np.array(list(coeffs.values()))
    order = np.argsort(keys)
    keys, vals = keys[order], vals[order]
    lin = iu[:, :, None].astype(np.int64) * nv + iv[:, None, :]
    pos = np.clip(np.searchsorted(keys, lin), 0, keys.size - 1)
    return np.where(keys[pos] == lin, vals[pos], 0.0)


def eval_thb(mesh: HierarchicalMesh, thb: ThbFunction, x) -> np.ndarray | float:
    """Evaluate ``T`` as the mother B-spline minus its removed fine content."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    sp = mesh.spaces[thb.level]
    out = sp.eval_function(thb.index, pts)
    for k, rem in thb.removed.items():
        if not rem:
            continue
        spk = mesh.spaces[k]
        iu, iv, vals = spk.eval_basis(pts)
        c = _lookup(rem, iu, iv, spk.shape[1])
        out = out - np.einsum("nab,nab->n", c, vals)
    if np.ndim(x) == 1:
        return float(out[0])
    return out
