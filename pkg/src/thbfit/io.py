"""Readers and writers for point clouds, fit configurations, and fit outputs.

File layouts are described in ``docs/FORMATS.md``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import fields
from pathlib import Path

import numpy as np

from .adaptive import FitConfig, FitReport, HierarchicalSurface
from .hierarchy import HierarchicalMesh
from .local_fit import LocalFitParams, PointCloud


class InputError(ValueError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, message: str, path=None, line: int | None = None):
        where = f"{path}:{line}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(where + message)
        self.path = path
        self.line = line


def _fmt(x: float) -> str:
    return repr(float(x))


def read_cloud(path) -> PointCloud:
    """Read ``x y z u v`` records; ``#`` starts a comment line."""
    pts, prm = [], []
    with open(path, encoding="ascii", errors="strict") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 5:
                raise InputError(f"expected 5 numbers, found {len(parts)}", path, lineno)
            try:
                vals = [float(p) for p in parts]
            except ValueError:
                raise InputError("malformed number", path, lineno) from None
            if not all(np.isfinite(vals)):
                raise InputError("non-finite value", path, lineno)
            pts.append(vals[:3])
            prm.append(vals[3:])
    if not pts:
        raise InputError("no data records", path)
    return PointCloud(np.array(pts), np.array(prm))


def write_cloud(path, cloud: PointCloud, comment: str | None = None) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        for f, x in zip(cloud.points, cloud.params):
            fh.write(" ".join(_fmt(v) for v in (*f, *x)) + "\n")


# key -> (parser, FitConfig / LocalFitParams target)
_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}
CONFIG_KEYS = {
    "degree_u": int, "degree_v": int, "cells_u": int, "cells_v": int,
    "periodic_u": "bool", "periodic_v": "bool",
    "u_min": float, "u_max": float, "v_min": float, "v_max": float,
    "epsilon": float, "epsilon_relative": float, "eta": float, "max_levels": int,
    "n_loc": int, "n1": int, "n2": int,
    "mu": float, "n_min": int, "delta": float, "tau_col": float,
}


def parse_config(text: str, path=None) -> dict:
    """Parse ``key = value`` lines into typed values (no range checks)."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError("expected 'key = value'", path, lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise InputError(f"unknown key '{key}'", path, lineno)
        if key in out:
            raise InputError(f"duplicate key '{key}'", path, lineno)
        kind = CONFIG_KEYS[key]
        try:
            if kind == "bool":
                out[key] = _BOOL[val.lower()]
            elif kind is int:
                out[key] = int(val)
            else:
                out[key] = float(val)
        except (ValueError, KeyError):
            raise InputError(f"invalid value for '{key}': {val!r}", path, lineno) from None
    return out


def build_config(values: dict, cloud: PointCloud | None = None) -> FitConfig:
    """Validated :class:`FitConfig` from parsed values and documented defaults."""
    if values.get("periodic_v"):
        raise ValueError("periodic_v is not supported; only u may be periodic")
    if "epsilon" in values and "epsilon_relative" in values:
        raise ValueError("give either epsilon or epsilon_relative, not both")
    defaults = FitConfig()
    lp = LocalFitParams(**{f.name: values[f.name] for f in fields(LocalFitParams)
                           if f.name in values})
    eps = values.get("epsilon", defaults.epsilon)
    if "epsilon_relative" in values:
        if cloud is None:
            raise ValueError("epsilon_relative needs the point cloud")
        eps = values["epsilon_relative"] * cloud.bbox_diagonal
    return FitConfig(
        degree=(values.get("degree_u", defaults.degree[0]),
                values.get("degree_v", defaults.degree[1])),
        cells=(values.get("cells_u", defaults.cells[0]),
               values.get("cells_v", defaults.cells[1])),
        periodic_u=values.get("periodic_u", False),
        domain=((values.get("u_min", 0.0), values.get("u_max", 1.0)),
                (values.get("v_min", 0.0), values.get("v_max", 1.0))),
        epsilon=eps,
        eta=values.get("eta", defaults.eta),
        max_levels=values.get("max_levels", defaults.max_levels),
        n_loc=values.get("n_loc", defaults.n_loc),
        n1=values.get("n1", 1), n2=values.get("n2", 1),
        local=lp,
    )


def read_config(path, cloud: PointCloud | None = None) -> FitConfig:
    text = Path(path).read_text(encoding="utf-8")
    values = parse_config(text, path)
    try:
        return build_config(values, cloud)
    except ValueError as exc:
        raise InputError(str(exc), path) from None


def config_text(config: FitConfig) -> str:
    """Config-file text reproducing ``config``."""
    (a, b), (c, d) = config.domain
    lp = config.local
    rows = [
        ("degree_u", config.degree[0]), ("degree_v", config.degree[1]),
        ("cells_u", config.cells[0]), ("cells_v", config.cells[1]),
        ("periodic_u", str(config.periodic_u).lower()),
        ("u_min", a), ("u_max", b), ("v_min", c), ("v_max", d),
        ("epsilon", _fmt(config.epsilon)), ("eta", config.eta),
        ("max_levels", config.max_levels), ("n_loc", config.n_loc),
        ("n1", config.n1), ("n2", config.n2),
        ("mu", lp.mu), ("n_min", lp.n_min), ("delta", lp.delta), ("tau_col", lp.tau_col),
    ]
    return "".join(f"{k} = {v}\n" for k, v in rows)


def sample_surface(surface: HierarchicalSurface, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Vertices and triangles of the surface sampled on an ``n x n`` grid.

    A periodic u direction gets ``n`` distinct samples and wraps its last
    column of quads around to the first, so the seam carries no duplicates.
    """
    if n < 2:
        raise ValueError("sample grid needs at least 2 nodes per direction")
    sp = surface.mesh.base
    if sp.periodic:
        us = sp.u.lo + (sp.u.hi - sp.u.lo) * np.arange(n) / n
        nquad_u = n
    else:
        us = np.linspace(sp.u.lo, sp.u.hi, n)
        nquad_u = n - 1
    vs = np.linspace(sp.v.lo, sp.v.hi, n)
    uu, vv = np.meshgrid(us, vs, indexing="ij")
    verts = surface.evaluate(np.column_stack([uu.ravel(), vv.ravel()]))
    a_u = np.arange(nquad_u)
    b_u = (a_u + 1) % n
    a_v = np.arange(n - 1)
    i0 = a_u[:, None] * n + a_v[None, :]
    i1 = b_u[:, None] * n + a_v[None, :]
    i2 = b_u[:, None] * n + a_v[None, :] + 1
    i3 = a_u[:, None] * n + a_v[None, :] + 1
    tri = np.concatenate([np.stack([i0, i1, i2], -1).reshape(-1, 3),
                          np.stack([i0, i2, i3], -1).reshape(-1, 3)])
    return verts, tri


def write_obj(path, verts: np.ndarray, faces: np.ndarray) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("# thbfit sampled surface\n")
        for v in verts:
            fh.write("v " + " ".join(_fmt(x) for x in v) + "\n")
        for f in faces:
            fh.write("f {} {} {}\n".format(*(int(k) + 1 for k in f)))


def read_obj(path) -> tuple[np.ndarray, np.ndarray]:
    verts, faces = [], []
    with open(path, encoding="ascii") as fh:
        for line in fh:
            if line.startswith("v "):
                verts.append([float(x) for x in line.split()[1:4]])
            elif line.startswith("f "):
                faces.append([int(x.split("/")[0]) - 1 for x in line.split()[1:4]])
    return np.array(verts), np.array(faces, dtype=np.intp)


def write_mesh_dump(path, mesh: HierarchicalMesh) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(mesh.to_dict(), fh, indent=1)
        fh.write("\n")


def read_mesh_dump(path) -> HierarchicalMesh:
    """Rebuild a mesh from its dump (active cells determine every ``Omega^l``)."""
    from .bspline import TensorSpace

    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    lv = doc["levels"]
    base = TensorSpace.uniform(tuple(doc["degree"]), tuple(lv[0]["cells"]),
                               doc["periodic_u"], tuple(map(tuple, doc["domain"])))
    doms = [np.zeros(tuple(l["cells"]), dtype=bool) for l in lv]
    for lev in range(len(lv) - 1, -1, -1):
        for i, j in lv[lev]["active_cells"]:
            doms[lev][i, j] = True
        if lev + 1 < len(lv):
            doms[lev] |= doms[lev + 1][::2, ::2]
    return HierarchicalMesh(base, doms)


REPORT_COLUMNS = ["record", "index", "levels", "dof", "within_fraction", "max_error",
                  "marked_cells", "error"]


def write_report(path, report: FitReport) -> None:
    """Comma-separated fit report: iteration rows, then one row per data point."""
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(f"# termination={report.termination}\n")
        fh.write(f"# epsilon={_fmt(report.epsilon)}\n")
        fh.write(f"# eta={_fmt(report.eta)}\n")
        fh.write(f"# bbox_diagonal={_fmt(report.bbox_diagonal)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in report.iterations:
            w.writerow(["iteration", r.iteration, r.levels, r.dof, _fmt(r.within_fraction),
                        _fmt(r.max_error), r.marked_cells, ""])
        for i, e in enumerate(report.errors):
            w.writerow(["point", i, "", "", "", "", "", _fmt(e)])


def read_report(path) -> dict:
    meta, iters, errors = {}, [], []
    with open(path, encoding="ascii") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            k, v = line[1:].strip().split("=", 1)
            meta[k] = v
        else:
            body.append(line)
    for row in csv.DictReader(body):
        if row["record"] == "iteration":
            iters.append({"levels": int(row["levels"]), "dof": int(row["dof"]),
                          "within_fraction": float(row["within_fraction"]),
                          "max_error": float(row["max_error"]),
                          "marked_cells": int(row["marked_cells"])})
        else:
            errors.append(float(row["error"]))
    return {"meta": meta, "iterations": iters, "errors": np.array(errors)}
