"""Synthetic parametrized point clouds.

All shapes are sampled over the unit parameter square and measured in meters.
The generators are deterministic for a given seed.

``plane``
    ``x = 0.1 u``, ``y = 0.1 v``, ``z = PLANE[0] x + PLANE[1] y + PLANE[2]``.
``ridge``
    ``x = 0.1 u``, ``y = 0.1 v``, ``z = 0.1 tanh(20 (u + v - 1))``: a sharp
    step along the anti-diagonal.
``peaks``
    ``x = 0.1 u``, ``y = 0.1 v``, ``z`` a scaled copy of the classic
    three-Gaussian "peaks" function on ``[-3, 3]^2``.
``cylinder-airfoil``
    A twisted, extruded closed airfoil-like section, periodic in ``u``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .local_fit import PointCloud

SHAPES = ("plane", "ridge", "peaks", "cylinder-airfoil")
PLANE = (0.3, -0.2, 0.01)
RIDGE_STEEPNESS = 20.0
RIDGE_HEIGHT = 0.1
SIDE = 0.1


@dataclass
class SynthInfo:
    shape: str
    seed: int
    periodic_u: bool
    voids: list[tuple[float, float, float, float]] = field(default_factory=list)
    cluster_centres: list[tuple[float, float]] = field(default_factory=list)

    def in_void(self, params: np.ndarray) -> np.ndarray:
        params = np.atleast_2d(params)
        hit = np.zeros(params.shape[0], dtype=bool)
        for u0, u1, v0, v1 in self.voids:
            hit |= ((params[:, 0] >= u0) & (params[:, 0] <= u1)
                    & (params[:, 1] >= v0) & (params[:, 1] <= v1))
        return hit


def _surface(shape: str, uv: np.ndarray) -> np.ndarray:
    u, v = uv[:, 0], uv[:, 1]
    if shape == "plane":
        x, y = SIDE * u, SIDE * v
        a, b, c = PLANE
        return np.column_stack([x, y, a * x + b * y + c])
    if shape == "ridge":
        return np.column_stack([SIDE * u, SIDE * v,
                                RIDGE_HEIGHT * np.tanh(RIDGE_STEEPNESS * (u + v - 1.0))])
    if shape == "peaks":
        X, Y = 6.0 * u - 3.0, 6.0 * v - 3.0
        z = (3 * (1 - X) ** 2 * np.exp(-X ** 2 - (Y + 1) ** 2)
             - 10 * (X / 5 - X ** 3 - Y ** 5) * np.exp(-X ** 2 - Y ** 2)
             - np.exp(-(X + 1) ** 2 - Y ** 2) / 3)
        return np.column_stack([SIDE * u, SIDE * v, 0.002 * z])
    if shape == "cylinder-airfoil":
        th = 2 * np.pi * u
        chord, thick, height = 0.06, 0.012, 0.08
        # cambered teardrop section, closed and smooth in u
        sx = 0.5 * chord * np.cos(th)
        sy = thick * np.sin(th) * (1.0 - 0.6 * np.cos(th)) + 0.004 * np.cos(th) ** 2
        twist = 0.4 * v
        x = sx * np.cos(twist) - sy * np.sin(twist)
        y = sx * np.sin(twist) + sy * np.cos(twist)
        return np.column_stack([x, y, height * v])
    raise ValueError(f"unknown shape {shape!r}; choose from {', '.join(SHAPES)}")


def synthesize(shape: str, n: int, noise: float = 0.0, voids: int = 0,
               cluster: float = 1.0, seed: int = 0) -> tuple[PointCloud, SynthInfo]:
    """Sample ``n`` points of a synthetic shape.

    ``voids`` rectangular parameter holes are left without samples.  With
    ``cluster > 1`` a fraction ``1 - 1/cluster`` of the sites is drawn from a
    few tight Gaussian clusters instead of uniformly.
    """
    if shape not in SHAPES:
        raise ValueError(f"unknown shape {shape!r}; choose from {', '.join(SHAPES)}")
    if n < 1:
        raise ValueError("n must be positive")
    if noise < 0:
        raise ValueError("noise must be non-negative")
    if not 0 <= voids <= 8:
        raise ValueError("voids must be between 0 and 8")
    if cluster < 1:
        raise ValueError("cluster factor must be at least 1")
    rng = np.random.default_rng(seed)
    periodic = shape == "cylinder-airfoil"
    info = SynthInfo(shape, seed, periodic)
    for _ in range(voids):
        cu, cv = rng.uniform(0.2, 0.8, size=2)
        hu, hv = rng.uniform(0.04, 0.08, size=2)
        info.voids.append((cu - hu, cu + hu, cv - hv, cv + hv))
    n_cl = int(round(n * (1.0 - 1.0 / cluster)))
    if n_cl:
        info.cluster_centres = [tuple(c) for c in rng.uniform(0.1, 0.9, size=(5, 2))]

    def draw(m, clustered):
        if not clustered:
            return rng.random((m, 2))
        k = rng.integers(0, len(info.cluster_centres), size=m)
        uv = np.asarray(info.cluster_centres)[k] + 0.03 * rng.standard_normal((m, 2))
        if periodic:
            uv[:, 0] = np.mod(uv[:, 0], 1.0)
        return np.clip(uv, 0.0, np.nextafter(1.0, 0.0))

    parts = []
    for m, clustered in ((n - n_cl, False), (n_cl, True)):
        got = 0
        while got < m:
            uv = draw(2 * (m - got) + 16, clustered)
            uv = uv[~info.in_void(uv)][:m - got]
            parts.append(uv)
            got += uv.shape[0]
    uv = np.concatenate(parts) if parts else np.zeros((0, 2))
    pts = _surface(shape, uv)
    if noise > 0:
        pts = pts + noise * rng.standard_normal(pts.shape)
    return PointCloud(pts, uv), info
