"""Figures written next to a fit report."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.collections import PatchCollection  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

from .adaptive import FitReport  # noqa: E402
from .hierarchy import HierarchicalMesh  # noqa: E402


def _new(width=5.0, height=None):
    golden = (np.sqrt(5.0) - 1.0) / 2.0
    fig, ax = plt.subplots(figsize=(width, height or width * golden))
    return fig, ax


def plot_mesh(mesh: HierarchicalMesh, ax=None):
    """Active cells of every level, shaded by level."""
    if ax is None:
        _, ax = _new(5.0, 5.0)
    cmap = plt.get_cmap("viridis", max(mesh.nlevels, 2))
    for lev, sp in enumerate(mesh.spaces):
        rects = []
        for i, j in np.argwhere(mesh.active_mask(lev)):
            u0, u1, v0, v1 = sp.cell_rect((i, j))
            rects.append(Rectangle((u0, v0), u1 - u0, v1 - v0))
        if rects:
            ax.add_collection(PatchCollection(rects, facecolor=cmap(lev), edgecolor="k",
                                              linewidth=0.2, alpha=0.8, label=f"level {lev}"))
    b = mesh.base
    ax.set_xlim(b.u.lo, b.u.hi)
    ax.set_ylim(b.v.lo, b.v.hi)
    ax.set_aspect("equal")
    ax.set_xlabel("u")
    ax.set_ylabel("v")
    ax.set_title(f"hierarchical mesh, {mesh.nlevels} levels, {mesh.active.dof} DOF")
    return ax


def plot_errors(params: np.ndarray, errors: np.ndarray, epsilon: float, ax=None):
    """Sites coloured by log10 error; sites above tolerance drawn on top."""
    if ax is None:
        _, ax = _new(5.5, 5.0)
    logs = np.log10(np.maximum(errors, 1e-300))
    order = np.argsort(errors)
    sc = ax.scatter(params[order, 0], params[order, 1], c=logs[order], s=2, cmap="magma")
    plt.colorbar(sc, ax=ax, label="log10 error [m]")
    bad = errors > epsilon
    ax.set_title(f"{100 * (1 - bad.mean()):.2f}% of sites within {epsilon:.3g} m")
    ax.set_xlabel("u")
    ax.set_ylabel("v")
    ax.set_aspect("equal")
    return ax


def plot_convergence(report: FitReport, ax=None):
    if ax is None:
        _, ax = _new()
    dof = [r.dof for r in report.iterations]
    ax.semilogy(dof, [r.max_error for r in report.iterations], "o-", label="max error")
    ax.axhline(report.epsilon, color="gray", ls="--", label="tolerance")
    ax.set_xlabel("degrees of freedom")
    ax.set_ylabel("error [m]")
    ax2 = ax.twinx()
    ax2.plot(dof, [100 * r.within_fraction for r in report.iterations], "s:", color="C1")
    ax2.axhline(100 * report.eta, color="C1", ls="--", lw=0.8)
    ax2.set_ylabel("% within tolerance", color="C1")
    ax.legend(loc="center right")
    return ax


def render_report_figures(report_path, mesh: HierarchicalMesh, params: np.ndarray,
                          report: FitReport) -> list[Path]:
    """Write ``<report>_mesh.png``, ``_errors.png`` and ``_convergence.png``."""
    report_path = Path(report_path)
    stem = report_path.with_suffix("")
    out = []
    for name, draw in (("mesh", lambda ax: plot_mesh(mesh, ax)),
                       ("errors", lambda ax: plot_errors(params, report.errors,
                                                         report.epsilon, ax)),
                       ("convergence", lambda ax: plot_convergence(report, ax))):
        fig, ax = _new(5.5, 5.0) if name != "convergence" else _new()
        draw(ax)
        fig.tight_layout()
        path = Path(f"{stem}_{name}.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        out.append(path)
    return out
