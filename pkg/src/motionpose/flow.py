"""Sparse pyramidal Lucas-Kanade point tracking.

Stands in for a dense learned flow network: displacements are only computed
at the queried points. Images are float arrays in [0, 1]; points are
``(u, v)`` = (column, row) pixel coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

from .errors import DimensionMismatch, ImageTooSmall, TrackingLost

TRACKED = "tracked"
LOST = "lost"


@dataclass(frozen=True)
class FlowParams:
    pyramid_levels: int = 3
    window_radius: int = 7
    max_iterations: int = 10
    convergence_epsilon: float = 0.01
    min_eigen_threshold: float = 1e-4
    # Gaussian window weight, sigma as a fraction of window_radius; 0 gives a flat window
    window_sigma_ratio: float = 1.0 / 3.0

    def __post_init__(self):
        if self.pyramid_levels < 1 or self.window_radius < 2 or self.max_iterations < 1 or self.window_sigma_ratio < 0:
            raise ValueError(f"invalid flow parameters: {self}")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class FlowResult:
    displacement: tuple  # (du, dv); (0, 0) when lost
    status: str
    residual: float

    @property
    def tracked(self) -> bool:
        return self.status == TRACKED


def _downsample(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[0] // 2 * 2, img.shape[1] // 2 * 2
    return img[:h, :w].reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def _pyramid(img: np.ndarray, levels: int) -> list[np.ndarray]:
    pyr = [img]
    for _ in range(levels - 1):
        pyr.append(_downsample(pyr[-1]))
    return pyr


def _sample(img: np.ndarray, uu: np.ndarray, vv: np.ndarray) -> np.ndarray:
    return map_coordinates(img, [vv.ravel(), uu.ravel()], order=1, mode="nearest").reshape(uu.shape)


class FlowContext:
    """Pyramids and gradients for one image pair, reused across point queries."""

    def __init__(self, img_a, img_b, params: FlowParams = FlowParams()):
        a = np.asarray(img_a, dtype=np.float64)
        b = np.asarray(img_b, dtype=np.float64)
        if a.shape != b.shape or a.ndim != 2:
            raise DimensionMismatch(f"image shapes differ or are not 2-D: {a.shape} vs {b.shape}")
        need = 2 ** (params.pyramid_levels - 1) * (2 * params.window_radius + 1)
        if min(a.shape) < need:
            raise ImageTooSmall(f"images {a.shape} need at least {need} px per side for {params.pyramid_levels} levels")
        self.params = params
        self.shape = a.shape
        self.pyr_a = _pyramid(a, params.pyramid_levels)
        self.pyr_b = _pyramid(b, params.pyramid_levels)
        self.grad_a = [np.gradient(level) for level in self.pyr_a]  # (d/drow, d/dcol)
        r = np.arange(-params.window_radius, params.window_radius + 1, dtype=float)
        self._du, self._dv = np.meshgrid(r, r)
        # keypoints sit on line ends, so a flat window is dominated by edge pixels
        # that move differently from the point under rotation; centre weighting cuts that bias
        sw = params.window_sigma_ratio * params.window_radius
        self._w = np.exp(-(self._du**2 + self._dv**2) / (2 * sw * sw)) if sw > 0 else np.ones_like(self._du)

    def track(self, point) -> FlowResult:
        prm = self.params
        p0 = np.asarray(point, dtype=float)
        g = np.zeros(2)
        A = B = None
        for level in range(prm.pyramid_levels - 1, -1, -1):
            scale = 2.0**level
            p = (p0 + 0.5) / scale - 0.5
            uu, vv = p[0] + self._du, p[1] + self._dv
            A = _sample(self.pyr_a[level], uu, vv)
            gy, gx = self.grad_a[level]
            Ix, Iy = _sample(gx, uu, vv), _sample(gy, uu, vv)
            wx, wy = self._w * Ix, self._w * Iy
            G = np.array([[np.sum(wx * Ix), np.sum(wx * Iy)], [np.sum(wx * Iy), np.sum(wy * Iy)]])
            if np.linalg.eigvalsh(G)[0] / self._w.sum() < prm.min_eigen_threshold:
                return FlowResult((0.0, 0.0), LOST, float("nan"))
            v = np.zeros(2)
            for _ in range(prm.max_iterations):
                B = _sample(self.pyr_b[level], uu + g[0] + v[0], vv + g[1] + v[1])
                e = A - B
                eta = np.linalg.solve(G, np.array([np.sum(e * wx), np.sum(e * wy)]))
                v += eta
                if np.hypot(*eta) < prm.convergence_epsilon:
                    break
            g = g + v
            if level > 0:
                g = 2.0 * g
        h, w = self.shape
        q = p0 + g
        if not (0.0 <= q[0] <= w - 1 and 0.0 <= q[1] <= h - 1) or not np.all(np.isfinite(g)):
            return FlowResult((0.0, 0.0), LOST, float("nan"))
        B = _sample(self.pyr_b[0], p0[0] + self._du + g[0], p0[1] + self._dv + g[1])
        return FlowResult((float(g[0]), float(g[1])), TRACKED, float(np.mean(np.abs(A - B))))


def estimate_displacements(img_a, img_b, points, params: FlowParams = FlowParams()) -> list[FlowResult]:
    """Track each point from ``img_a`` into ``img_b``: ``img_b(p + d) ~ img_a(p)``."""
    ctx = FlowContext(img_a, img_b, params)
    return [ctx.track(p) for p in np.asarray(points, dtype=float).reshape(-1, 2)]


def sample_displacement(ctx: FlowContext | list, query, points=None) -> np.ndarray:
    """Displacement at ``query``; raises :class:`TrackingLost` for lost points.

    ``ctx`` is either a :class:`FlowContext` (LK runs at the query itself) or a
    list of :class:`FlowResult` together with the ``points`` they were computed
    at, in which case the query must be one of those points.
    """
    q = np.asarray(query, dtype=float)
    if isinstance(ctx, FlowContext):
        res = ctx.track(q)
    else:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        hits = np.flatnonzero(np.all(pts == q, axis=1))
        if hits.size == 0:
            raise KeyError(f"no flow result computed at {tuple(q)}")
        res = ctx[int(hits[0])]
    if not res.tracked:
        raise TrackingLost(f"point {tuple(q)} could not be tracked")
    return np.array(res.displacement)
