import json
from collections import Counter

import numpy as np
import pytest

from thbfit import io
from thbfit.adaptive import FitConfig, fit
from thbfit.cli import main
from thbfit.local_fit import PointCloud
from thbfit.synth import synthesize


def edge_counts(faces):
    c = Counter()
    for f in faces:
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            c[(min(a, b), max(a, b))] += 1
    return c


def test_cloud_round_trip(tmp_path, rng):
    cloud = PointCloud(rng.normal(size=(100, 3)) * 1e3, rng.random((100, 2)))
    path = tmp_path / "c.xyz"
    io.write_cloud(path, cloud, "two\nlines")
    back = io.read_cloud(path)
    np.testing.assert_array_equal(back.points, cloud.points)
    np.testing.assert_array_equal(back.params, cloud.params)


def test_malformed_line_reported(tmp_path, capsys):
    lines = ["# header"] + ["0.1 0.2 0.3 0.4 0.5"] * 15 + ["0.1 0.2 zz 0.4 0.5"]
    (tmp_path / "bad.xyz").write_text("\n".join(lines) + "\n")
    (tmp_path / "c.cfg").write_text("epsilon = 1e-3\n")
    with pytest.raises(io.InputError) as exc:
        io.read_cloud(tmp_path / "bad.xyz")
    assert exc.value.line == 17
    code = main(["fit", "--input", str(tmp_path / "bad.xyz"), "--config",
                 str(tmp_path / "c.cfg")])
    assert code == 1
    assert ":17:" in capsys.readouterr().err


@pytest.mark.parametrize("text,msg", [
    ("bogus = 1\n", "unknown key"),
    ("eta = 0.9\neta = 0.8\n", "duplicate"),
    ("degree_u = three\n", "invalid value"),
    ("periodic_v = true\n", "periodic_v"),
    ("epsilon = 1\nepsilon_relative = 1e-3\n", "either"),
    ("eta = 2\n", "eta"),
    ("just words\n", "key = value"),
])
def test_config_errors(tmp_path, text, msg):
    p = tmp_path / "c.cfg"
    p.write_text(text)
    with pytest.raises(ValueError, match=msg):
        io.read_config(p, PointCloud(np.zeros((1, 3)), np.zeros((1, 2))))


def test_config_defaults_and_round_trip(tmp_path):
    cloud, _ = synthesize("plane", 100, seed=0)
    p = tmp_path / "c.cfg"
    p.write_text("# comment\nepsilon_relative = 1e-3  # trailing\nn1 = 2\nperiodic_u = false\n")
    cfg = io.read_config(p, cloud)
    assert cfg.eta == 0.95 and cfg.n2 == 1 and cfg.n1 == 2
    assert cfg.local.delta == 0.0 and cfg.local.tau_col == 1e-10
    assert cfg.epsilon == pytest.approx(1e-3 * cloud.bbox_diagonal)
    p.write_text(io.config_text(cfg))
    assert io.read_config(p) == cfg


def write_inputs(tmp_path, shape, n, config, seed=0):
    assert main(["synth", "--shape", shape, "--n", str(n), "--seed", str(seed),
                 "--out", str(tmp_path / "in.xyz")]) == 0
    (tmp_path / "c.cfg").write_text(config)
    return ["fit", "--input", str(tmp_path / "in.xyz"), "--config", str(tmp_path / "c.cfg")]


def test_cli_plane_converges(tmp_path):
    args = write_inputs(tmp_path, "plane", 2000, "degree_u = 2\ndegree_v = 2\nepsilon = 1e-6\n")
    out = [*args, "--out-surface", str(tmp_path / "s.obj"), "--out-mesh",
           str(tmp_path / "m.json"), "--out-report", str(tmp_path / "r.csv"),
           "--sample-grid", "16", "--figures"]
    assert main(out) == 0
    rep = io.read_report(tmp_path / "r.csv")
    assert rep["meta"]["termination"] == "converged"
    assert len(rep["iterations"]) == 1
    assert rep["iterations"][0]["within_fraction"] == 1.0
    assert rep["errors"].size == 2000
    verts, faces = io.read_obj(tmp_path / "s.obj")
    assert verts.shape == (256, 3) and faces.shape == (2 * 15 * 15, 3)
    for name in ("mesh", "errors", "convergence"):
        assert (tmp_path / f"r_{name}.png").stat().st_size > 0
    dump = json.loads((tmp_path / "m.json").read_text())
    assert dump["format"] == "thbfit-mesh/1" and dump["dof"] == 36


def test_cli_level_cap(tmp_path):
    args = write_inputs(tmp_path, "peaks", 2000, "max_levels = 1\nepsilon = 1e-9\n")
    assert main([*args, "--out-report", str(tmp_path / "r.csv")]) == 2
    assert io.read_report(tmp_path / "r.csv")["meta"]["termination"] == "level-cap"


def test_synth_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["synth", "--shape", "ridge", "--n", "300", "--voids", "2", "--cluster",
                     "2", "--noise", "1e-5", "--seed", "5", "--out",
                     str(tmp_path / f"{name}.xyz")]) == 0
    assert (tmp_path / "a.xyz").read_bytes() == (tmp_path / "b.xyz").read_bytes()
    assert main(["synth", "--shape", "plane", "--n", "0", "--out",
                 str(tmp_path / "c.xyz")]) == 1


def test_outputs_round_trip_and_sampling(tmp_path):
    cloud, _ = synthesize("ridge", 3000, seed=1)
    surf, rep = fit(cloud, FitConfig(epsilon=1e-3 * cloud.bbox_diagonal, max_levels=3))
    verts, faces = io.sample_surface(surf, 20)
    g = np.linspace(0, 1, 20)
    uu, vv = np.meshgrid(g, g, indexing="ij")
    direct = surf(np.column_stack([uu.ravel(), vv.ravel()]))
    assert np.abs(verts - direct).max() <= 1e-14
    io.write_obj(tmp_path / "s.obj", verts, faces)
    v2, f2 = io.read_obj(tmp_path / "s.obj")
    np.testing.assert_array_equal(v2, verts)
    np.testing.assert_array_equal(f2, faces)
    io.write_mesh_dump(tmp_path / "m.json", surf.mesh)
    back = io.read_mesh_dump(tmp_path / "m.json")
    assert back.to_dict() == surf.mesh.to_dict()
    io.write_report(tmp_path / "r.csv", rep)
    r = io.read_report(tmp_path / "r.csv")
    np.testing.assert_array_equal(r["errors"], rep.errors)
    assert [it["dof"] for it in r["iterations"]] == [it.dof for it in rep.iterations]
    assert float(r["meta"]["bbox_diagonal"]) == rep.bbox_diagonal


def test_periodic_sampling_is_stitched():
    cloud, _ = synthesize("cylinder-airfoil", 3000, seed=2)
    surf, _ = fit(cloud, FitConfig(cells=(8, 4), periodic_u=True, epsilon=1.0))
    n = 24
    verts, faces = io.sample_surface(surf, n)
    assert verts.shape[0] == n * n
    # no duplicated seam vertices
    assert len(np.unique(np.round(verts, 12), axis=0)) == n * n
    boundary = [e for e, k in edge_counts(faces).items() if k == 1]
    # the only open edges run along v = 0 and v = 1
    for a, b in boundary:
        assert a % n == b % n and a % n in (0, n - 1)
    assert len(boundary) == 2 * n
