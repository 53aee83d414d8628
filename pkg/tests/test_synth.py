import numpy as np
import pytest

from thbfit.synth import PLANE, SHAPES, synthesize


@pytest.mark.parametrize("shape", SHAPES)
def test_deterministic_per_seed(shape):
    a, _ = synthesize(shape, 500, noise=1e-4, voids=2, cluster=3.0, seed=11)
    b, _ = synthesize(shape, 500, noise=1e-4, voids=2, cluster=3.0, seed=11)
    c, _ = synthesize(shape, 500, noise=1e-4, voids=2, cluster=3.0, seed=12)
    assert a.points.tobytes() == b.points.tobytes()
    assert a.params.tobytes() == b.params.tobytes()
    assert a.params.tobytes() != c.params.tobytes()
    assert a.n == 500
    assert np.all((a.params >= 0) & (a.params < 1))


def test_plane_exact():
    cloud, _ = synthesize("plane", 1000, noise=0.0, seed=1)
    x, y, z = cloud.points.T
    al, be, ga = PLANE
    np.testing.assert_allclose(z, al * x + be * y + ga, atol=1e-15)


def test_voids_are_empty():
    cloud, info = synthesize("ridge", 5000, voids=3, cluster=2.0, seed=7)
    assert len(info.voids) == 3
    assert not info.in_void(cloud.params).any()


def test_cylinder_is_closed_in_u():
    cloud, info = synthesize("cylinder-airfoil", 200, seed=0)
    assert info.periodic_u
    from thbfit.synth import _surface
    v = np.linspace(0, 1, 7)
    a = _surface("cylinder-airfoil", np.column_stack([np.zeros(7), v]))
    b = _surface("cylinder-airfoil", np.column_stack([np.ones(7), v]))
    np.testing.assert_allclose(a, b, atol=1e-15)


def test_cluster_concentrates_sites():
    flat, _ = synthesize("plane", 4000, seed=3)
    clus, info = synthesize("plane", 4000, cluster=4.0, seed=3)
    c = np.asarray(info.cluster_centres)
    near = lambda p: np.min(np.linalg.norm(p[:, None, :] - c[None], axis=2), axis=1) < 0.05
    assert near(clus.params).mean() > 2 * near(flat.params).mean()


@pytest.mark.parametrize("kw", [{"shape": "torus"}, {"n": 0}, {"noise": -1.0},
                                {"voids": 9}, {"cluster": 0.5}])
def test_invalid_arguments(kw):
    args = {"shape": "plane", "n": 10} | kw
    with pytest.raises(ValueError):
        synthesize(**args)
