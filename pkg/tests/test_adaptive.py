import numpy as np
import pytest
from conftest import random_mesh

from thbfit import oracle
from thbfit.adaptive import (CONVERGED, LEVEL_CAP, NO_CELLS_MARKED, FitConfig,
                             HierarchicalSurface, evaluate_errors, fit, mark_cells)
from thbfit.bspline import CellBox, TensorSpace
from thbfit.hierarchy import HierarchicalMesh
from thbfit.local_fit import LocalFitParams, PointCloud
from thbfit.synth import synthesize


def zero_surface(mesh, dim=3):
    return HierarchicalSurface(mesh, {k: np.zeros(dim) for k in mesh.active})


def random_surface(mesh, rng):
    return HierarchicalSurface(mesh, {k: rng.normal(size=3) for k in mesh.active})


def test_three_four_five():
    mesh = HierarchicalMesh(TensorSpace.uniform((2, 2), (2, 2)))
    cloud = PointCloud(np.array([[3.0, 4.0, 0.0]]), np.array([[0.3, 0.6]]))
    assert evaluate_errors(zero_surface(mesh), cloud)[0] == 5.0


@pytest.mark.parametrize("periodic", [False, True])
def test_errors_match_expansion_oracle(rng, periodic):
    mesh = random_mesh(rng, (3, 2), (5, 4), periodic, 4)
    surf = random_surface(mesh, rng)
    params = rng.random((500, 2))
    exact = oracle.eval_expansion(mesh.spaces[-1], oracle.expand_surface(mesh, surf.coefficients),
                                  params)
    # self-sampled cloud
    cloud = PointCloud(exact, params)
    err = evaluate_errors(surf, cloud)
    assert err.max() <= 1e-12 * (1 + np.abs(exact).max())
    np.testing.assert_allclose(surf(params), exact, atol=1e-14 * (1 + np.abs(exact).max()))
    # and against the sum of individual truncated functions
    from thbfit.hierarchy import eval_thb
    naive = sum(np.outer(eval_thb(mesh, surf.thb(*k), params), c)
                for k, c in surf.coefficients.items())
    np.testing.assert_allclose(surf(params), naive, atol=1e-13)


def test_surface_rejects_mismatched_keys():
    mesh = HierarchicalMesh(TensorSpace.uniform((2, 2), (2, 2)))
    coeffs = {k: np.zeros(3) for k in mesh.active}
    coeffs.pop((0, (0, 0)))
    with pytest.raises(ValueError):
        HierarchicalSurface(mesh, coeffs)


def marking_config(n_loc=12, n1=1, n2=1, degree=(2, 2), periodic=False, cells=(4, 4)):
    return FitConfig(degree=degree, cells=cells, periodic_u=periodic, epsilon=1.0,
                     n_loc=n_loc, n1=n1, n2=n2, local=LocalFitParams(n_min=3))


def test_no_marks_within_tolerance(rng):
    mesh = random_mesh(rng, (2, 2), (4, 4), False, 3)
    params = rng.random((300, 2))
    cloud = PointCloud(np.zeros((300, 3)), params)
    assert mark_cells(zero_surface(mesh), cloud, np.full(300, 0.5), marking_config()) == set()


@pytest.mark.parametrize("periodic", [False, True])
@pytest.mark.parametrize("split", [(1, 1), (2, 2), (3, 1)])
def test_marking_matches_brute_force(rng, periodic, split):
    for trial in range(3):
        mesh = random_mesh(rng, (2, 3), (5, 4), periodic, int(rng.integers(1, 5)))
        n = int(rng.integers(300, 2000))
        params = rng.random((n, 2)) ** rng.uniform(0.5, 2.0, size=2)
        cloud = PointCloud(np.zeros((n, 3)), params)
        errors = rng.random(n) * (rng.random(n) < 0.05) * 3.0
        cfg = marking_config(int(rng.integers(4, 40)), *split, degree=(2, 3),
                             periodic=periodic, cells=(5, 4))
        got = mark_cells(zero_surface(mesh), cloud, errors, cfg)
        ref = oracle.brute_mark_cells(mesh, params, errors, cfg.epsilon, cfg.n_loc,
                                      cfg.n1, cfg.n2)
        assert got == ref


def test_single_offender_marks_support(rng):
    mesh = HierarchicalMesh(TensorSpace.uniform((2, 2), (8, 8)))
    params = rng.random((4000, 2))
    errors = np.zeros(len(params))
    k = int(np.argmin(np.linalg.norm(params - [0.5625, 0.5625], axis=1)))
    errors[k] = 10.0
    cloud = PointCloud(np.zeros((len(params), 3)), params)
    got = mark_cells(zero_surface(mesh), cloud, errors, marking_config(n_loc=20, cells=(8, 8)))
    # every qualifying mother is one whose support holds site k: a 5x5 cell block
    assert got == {CellBox(0, i, j) for i in range(2, 7) for j in range(2, 7)}


def test_empty_quadrant_disqualifies_mother(rng):
    sp = TensorSpace.uniform((2, 2), (6, 6))
    mesh = HierarchicalMesh(sp)
    J = (4, 4)  # support cells 2..4, u and v in [1/3, 5/6)
    params = rng.random((6000, 2))
    lo, hi = 1 / 3, 5 / 6
    mid = (lo + hi) / 2
    # empty the upper-right quadrant of the support
    hole = (params[:, 0] >= mid) & (params[:, 0] < hi) & (params[:, 1] >= mid) \
        & (params[:, 1] < hi)
    params = params[~hole]
    errors = np.zeros(len(params))
    k = int(np.argmin(np.linalg.norm(params - [0.45, 0.45], axis=1)))
    errors[k] = 10.0
    cloud = PointCloud(np.zeros((len(params), 3)), params)
    cfg22 = marking_config(n_loc=8, n1=2, n2=2, cells=(6, 6))
    cfg11 = marking_config(n_loc=8, cells=(6, 6))
    with_split = mark_cells(zero_surface(mesh), cloud, errors, cfg22)
    without = mark_cells(zero_surface(mesh), cloud, errors, cfg11)
    supp = {CellBox(0, c.i, c.j) for c in sp.support_cells(J)}
    assert supp <= without
    ref = oracle.brute_mark_cells(mesh, params, errors, 1.0, 8, 2, 2)
    assert with_split == ref
    # J itself is disqualified; its cell (4, 4) sits only under mothers hit by the hole
    assert CellBox(0, 4, 4) not in with_split


def plane_cloud(n, rng, noise=0.0):
    params = rng.random((n, 2))
    x, y = 0.1 * params[:, 0], 0.1 * params[:, 1]
    pts = np.column_stack([x, y, 0.3 * x - 0.2 * y + 0.01])
    return PointCloud(pts + noise * rng.standard_normal(pts.shape), params)


def test_plane_converges_at_iteration_zero(rng):
    cloud = plane_cloud(2000, rng)
    surf, rep = fit(cloud, FitConfig(degree=(2, 2), epsilon=1e-6))
    assert rep.termination == CONVERGED
    assert len(rep.iterations) == 1
    assert rep.final.levels == 1 and rep.final.within_fraction == 1.0
    assert rep.final.max_error <= 1e-8 * (1 + np.abs(cloud.points).max())


def test_single_level_cap(rng):
    cloud, _ = synthesize("peaks", 3000, seed=1)
    surf, rep = fit(cloud, FitConfig(max_levels=1, epsilon=1e-7))
    assert rep.termination == LEVEL_CAP
    assert len(rep.iterations) == 1 and surf.mesh.nlevels == 1


def test_starved_refinement_reports_no_cells(rng):
    cloud, _ = synthesize("peaks", 400, seed=2)
    surf, rep = fit(cloud, FitConfig(epsilon=1e-7, n_loc=400))
    assert rep.termination == NO_CELLS_MARKED


def test_fit_invariants_and_persistence():
    cloud, _ = synthesize("peaks", 6000, noise=1e-6, seed=5)
    cfg = FitConfig(epsilon=2e-4 * cloud.bbox_diagonal, max_levels=4, n_loc=20)
    history = []
    surf, rep = fit(cloud, cfg, callback=lambda it, s: history.append(dict(s.coefficients)))
    assert len(rep.iterations) <= cfg.max_levels + 1
    dofs = [r.dof for r in rep.iterations]
    assert dofs == sorted(dofs)
    assert [len(h) for h in history] == dofs
    for prev, cur in zip(history, history[1:]):
        for k, v in cur.items():
            if k in prev:
                assert v.tobytes() == prev[k].tobytes()
    err = evaluate_errors(surf, cloud)
    assert float(np.mean(err <= cfg.epsilon)) == rep.final.within_fraction
    assert float(err.max()) == rep.final.max_error
    assert surf.mesh.nlevels <= cfg.max_levels


def test_threads_do_not_change_results():
    cloud, _ = synthesize("ridge", 4000, noise=1e-6, seed=9)
    cfg = FitConfig(epsilon=1e-3 * cloud.bbox_diagonal, max_levels=4)
    _, r1 = fit(cloud, cfg, threads=1)
    _, r4 = fit(cloud, cfg, threads=4)
    assert r1.summary() == r4.summary()


def test_periodic_fit_closes(rng):
    cloud, _ = synthesize("cylinder-airfoil", 4000, seed=3)
    cfg = FitConfig(cells=(8, 4), periodic_u=True, epsilon=1e-3 * cloud.bbox_diagonal,
                    max_levels=3)
    surf, rep = fit(cloud, cfg)
    v = np.linspace(0, 1, 50)
    a = surf(np.column_stack([np.zeros_like(v), v]))
    b = surf(np.column_stack([np.full_like(v, 1.0 - 1e-15), v]))
    assert np.abs(a - b).max() <= 1e-10


@pytest.mark.parametrize("bad", [
    {"degree": (0, 2)}, {"degree": (5, 2)}, {"epsilon": 0.0}, {"eta": 0.0}, {"eta": 1.5},
    {"max_levels": 0}, {"n_loc": 2}, {"n1": 0}, {"cells": (0, 3)},
    {"n_loc": 5, "local": LocalFitParams(n_min=12)},
    {"periodic_u": True, "cells": (2, 4)},
    {"domain": ((1.0, 0.0), (0.0, 1.0))},
])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        FitConfig(**bad)


def test_parameters_outside_domain_rejected(rng):
    cloud = PointCloud(np.zeros((5, 3)), np.array([[0.1, 0.1]] * 4 + [[1.2, 0.5]]))
    with pytest.raises(ValueError):
        fit(cloud, FitConfig())
