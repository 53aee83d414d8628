import numpy as np
import pytest

from thbfit.bspline import TensorSpace
from thbfit.hierarchy import HierarchicalMesh


def random_mesh(rng, degree=(2, 2), cells=(4, 4), periodic=False, nlevels=3, frac=0.3):
    """Mesh grown by refining random active cells until it has ``nlevels`` levels."""
    mesh = HierarchicalMesh(TensorSpace.uniform(degree, cells, periodic))
    while mesh.nlevels < nlevels:
        cells_ = mesh.active_cell_list()
        top = [c for c in cells_ if c.level == mesh.nlevels - 1]
        k = max(1, int(frac * len(cells_)))
        pick = {cells_[i] for i in rng.choice(len(cells_), size=k, replace=False)}
        pick.add(top[rng.integers(len(top))])
        mesh = mesh.refine(pick)
    return mesh


def interior_points(rng, n, space=None):
    pts = rng.random((n, 2))
    if space is not None:
        (a, b), (c, d) = (space.u.lo, space.u.hi), (space.v.lo, space.v.hi)
        pts = np.column_stack([a + (b - a) * pts[:, 0], c + (d - c) * pts[:, 1]])
    return pts


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
