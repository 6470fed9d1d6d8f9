"""Keypoint heatmap encoding, fusion and sub-pixel decoding.

Heatmap coordinates are ``(x, y)`` = (column, row) on the heatmap grid, with
grid point ``(i, j)`` at the centre of cell ``values[j, i]``. Image pixels map
to heatmap pixels by the uniform factor ``heatmap_size / image_size``.

Motion-aware maps are anisotropic Gaussians stretched along the keypoint
displacement: the major-axis sigma grows linearly with the displacement
length (capped) and the axis is rotated to ``atan2(dy, dx)``. Displacements
shorter than ``static_threshold`` fall back to the circular map.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, MalformedFile, NotDetected

MAHM_MAGIC = b"MAHM"
MAHM_VERSION = 1
_HEADER = struct.Struct("<4sIIII")


@dataclass(frozen=True)
class MotionEncodingParams:
    sigma_base: float = 2.0
    elongation_gain: float = 0.5
    max_elongation: float = 3.0
    static_threshold: float = 1.0
    heatmap_size: int = 64
    image_size: int = 256

    def __post_init__(self):
        if self.sigma_base <= 0:
            raise ValueError("sigma_base must be positive")
        if self.elongation_gain < 0 or self.static_threshold < 0:
            raise ValueError("elongation_gain and static_threshold must be non-negative")
        if self.max_elongation < 1:
            raise ValueError("max_elongation must be >= 1")
        if self.heatmap_size <= 0 or self.image_size % self.heatmap_size:
            raise ValueError("image_size must be divisible by heatmap_size")

    @property
    def scale(self) -> float:
        """Heatmap pixels per image pixel."""
        return self.heatmap_size / self.image_size

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(eq=False)
class Heatmap:
    values: np.ndarray  # (height, width), in [0, 1]
    visible: bool = True

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def peak_amplitude(self) -> float:
        return float(self.values.max()) if self.values.size else 0.0

    @classmethod
    def zeros(cls, size: int) -> Heatmap:
        return cls(np.zeros((size, size)), visible=False)


def to_heatmap_coords(p, params: MotionEncodingParams) -> np.ndarray:
    return np.asarray(p, dtype=float) * params.scale


def to_image_coords(p, params: MotionEncodingParams) -> np.ndarray:
    return np.asarray(p, dtype=float) * (params.image_size / params.heatmap_size)


def _in_bounds(kp, size: int) -> bool:
    return 0.0 <= kp[0] < size and 0.0 <= kp[1] < size


def _normalized(values: np.ndarray) -> np.ndarray:
    peak = values.max()
    return values / peak if peak > 0 else values


def _grid(size: int):
    r = np.arange(size, dtype=float)
    return np.meshgrid(r, r)  # xx[j, i] = i, yy[j, i] = j


def encode_circular(kp, params: MotionEncodingParams = MotionEncodingParams()) -> Heatmap:
    """Isotropic Gaussian with unit peak at the grid point nearest ``kp``."""
    n = params.heatmap_size
    kx, ky = float(kp[0]), float(kp[1])
    if not _in_bounds((kx, ky), n):
        return Heatmap.zeros(n)
    xx, yy = _grid(n)
    v = np.exp(-((xx - kx) ** 2 + (yy - ky) ** 2) / (2.0 * params.sigma_base**2))
    return Heatmap(_normalized(v))


def major_sigma(displacement_norm: float, params: MotionEncodingParams) -> float:
    return min(params.sigma_base + params.elongation_gain * displacement_norm,
               params.max_elongation * params.sigma_base)


def encode_motion_aware(kp, displacement, params: MotionEncodingParams = MotionEncodingParams()) -> Heatmap:
    """Elliptical Gaussian elongated along ``displacement`` (heatmap pixels)."""
    dx, dy = float(displacement[0]), float(displacement[1])
    mag = math.hypot(dx, dy)
    if mag < params.static_threshold:
        return encode_circular(kp, params)
    n = params.heatmap_size
    kx, ky = float(kp[0]), float(kp[1])
    if not _in_bounds((kx, ky), n):
        return Heatmap.zeros(n)
    theta = math.atan2(dy, dx)
    c, s = math.cos(theta), math.sin(theta)
    s_major = major_sigma(mag, params)
    s_minor = params.sigma_base
    xx, yy = _grid(n)
    ex, ey = xx - kx, yy - ky
    along = ex * c + ey * s
    across = -ex * s + ey * c
    v = np.exp(-0.5 * ((along / s_major) ** 2 + (across / s_minor) ** 2))
    return Heatmap(_normalized(v))


def fuse(h_prev: Heatmap, h_next: Heatmap) -> Heatmap:
    """Pixelwise geometric mean, rescaled to unit peak."""
    if h_prev.values.shape != h_next.values.shape:
        raise DimensionMismatch(f"heatmap shapes differ: {h_prev.values.shape} vs {h_next.values.shape}")
    v = np.sqrt(h_prev.values * h_next.values)
    nonzero = bool(v.max() > 0)
    return Heatmap(_normalized(v), visible=nonzero)


def _axis_offset(lm: float, lc: float, lp: float) -> float:
    curv = lm - 2.0 * lc + lp
    return -0.5 * (lp - lm) / curv if curv < 0 else 0.0


def _fit_stencil(values: np.ndarray, cx: int, cy: int):
    """Vertex of a quadratic fitted to log values of the 3x3 patch at (cx, cy)."""
    patch = values[cy - 1:cy + 2, cx - 1:cx + 2]
    if not np.all(patch > 0):
        return None
    L = np.log(patch)
    gx = 0.5 * (L[1, 2] - L[1, 0])
    gy = 0.5 * (L[2, 1] - L[0, 1])
    hxx = L[1, 2] - 2 * L[1, 1] + L[1, 0]
    hyy = L[2, 1] - 2 * L[1, 1] + L[0, 1]
    hxy = 0.25 * (L[2, 2] - L[2, 0] - L[0, 2] + L[0, 0])
    det = hxx * hyy - hxy * hxy
    if hxx < 0 and det > 0:
        ox = -(hyy * gx - hxy * gy) / det
        oy = -(hxx * gy - hxy * gx) / det
    else:
        ox = _axis_offset(L[1, 0], L[1, 1], L[1, 2])
        oy = _axis_offset(L[0, 1], L[1, 1], L[2, 1])
    return cx + ox, cy + oy


def decode(h: Heatmap | np.ndarray) -> tuple[np.ndarray, float]:
    """Locate the peak of ``h`` with sub-pixel precision.

    Integer argmax (first in row-major order), refined by fitting a quadratic
    to the log values of a 3x3 neighbourhood, which is shifted inward at
    borders. For elongated maps the grid argmax can sit more than half a
    pixel from the fitted vertex, so the neighbourhood is re-centred on the
    vertex (staying within one pixel of the argmax) before the final offset
    is clamped to +/-0.5 px per axis. Returns ``((x, y), confidence)``.
    """
    values = h.values if isinstance(h, Heatmap) else np.asarray(h, dtype=float)
    if values.size == 0 or not values.max() > 0:
        raise NotDetected("heatmap has no positive value")
    H, W = values.shape
    y0, x0 = np.unravel_index(int(np.argmax(values)), values.shape)
    conf = float(values[y0, x0])
    if W < 3 or H < 3:
        return np.array([float(x0), float(y0)]), conf

    def centre(v, v0, n):
        return min(max(v, v0 - 1, 1), v0 + 1, n - 2)

    px, py = x0, y0  # point the clamp is relative to
    cx, cy = centre(x0, x0, W), centre(y0, y0, H)
    vertex = _fit_stencil(values, cx, cy)
    for _ in range(2):
        if vertex is None:
            break
        nx, ny = int(round(vertex[0])), int(round(vertex[1]))
        if (nx, ny) == (px, py) or abs(nx - x0) > 1 or abs(ny - y0) > 1 or not (0 <= nx < W and 0 <= ny < H):
            break
        moved = _fit_stencil(values, centre(nx, x0, W), centre(ny, y0, H))
        if moved is None:
            break
        px, py, vertex = nx, ny, moved

    if vertex is None:
        # sparse support: 1-D fits through the argmax where all samples are positive
        x, y = float(x0), float(y0)
        row = values[y0, cx - 1:cx + 2]
        col = values[cy - 1:cy + 2, x0]
        if np.all(row > 0):
            x = cx + _axis_offset(*np.log(row))
        if np.all(col > 0):
            y = cy + _axis_offset(*np.log(col))
    else:
        x, y = vertex
    x = min(max(x, px - 0.5), px + 0.5)
    y = min(max(y, py - 0.5), py + 0.5)
    return np.array([x, y]), conf


def encode_keypoints(keypoints_img, params: MotionEncodingParams = MotionEncodingParams(),
                     displacements_img=None) -> np.ndarray:
    """Stack per-keypoint heatmaps (K, H, W) from image-pixel keypoints.

    ``displacements_img`` (image pixels) selects motion-aware encoding.
    """
    kps = to_heatmap_coords(np.asarray(keypoints_img, dtype=float).reshape(-1, 2), params)
    maps = []
    for i, kp in enumerate(kps):
        if displacements_img is None:
            maps.append(encode_circular(kp, params).values)
        else:
            d = to_heatmap_coords(displacements_img[i], params)
            maps.append(encode_motion_aware(kp, d, params).values)
    return np.stack(maps)


def write_heatmap_file(path, maps) -> None:
    """Write a (K, H, W) stack in the MAHM binary format."""
    if isinstance(maps, (list, tuple)) and maps and isinstance(maps[0], Heatmap):
        maps = np.stack([m.values for m in maps])
    arr = np.asarray(maps, dtype="<f4")
    if arr.ndim != 3:
        raise ValueError(f"expected (K, H, W) array, got shape {arr.shape}")
    K, H, W = arr.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAHM_MAGIC, MAHM_VERSION, K, H, W))
        fh.write(np.ascontiguousarray(arr).tobytes())


def read_heatmap_file(path) -> np.ndarray:
    """Read a MAHM file into a float64 (K, H, W) array."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise MalformedFile(f"{path}: file too short for header ({len(data)} bytes)")
    magic, version, K, H, W = _HEADER.unpack_from(data)
    if magic != MAHM_MAGIC:
        raise MalformedFile(f"{path}: bad magic {magic!r}")
    if version != MAHM_VERSION:
        raise MalformedFile(f"{path}: unsupported version {version}")
    if K == 0 or H == 0 or W == 0:
        raise MalformedFile(f"{path}: empty dimensions {(K, H, W)}")
    expected = _HEADER.size + 4 * K * H * W
    if len(data) != expected:
        raise MalformedFile(f"{path}: expected {expected} bytes for {(K, H, W)}, found {len(data)}")
    arr = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(K, H, W)
    return arr.astype(np.float64)
