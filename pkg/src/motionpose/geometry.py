"""Quaternions, rigid poses and pinhole projection.

Quaternions are scalar-first ``(w, x, y, z)`` with the Hamilton product, so
``quat_to_matrix(q1 * q2) == quat_to_matrix(q1) @ quat_to_matrix(q2)``.
A pose maps body-frame points into the camera frame: ``Xc = R X + T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveDepth

DEPTH_EPSILON = 1e-6


@dataclass(frozen=True)
class Quaternion:
    """Unit quaternion, normalized on construction."""

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        n = math.sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)
        if not math.isfinite(n) or n == 0.0:
            raise ValueError(f"cannot normalize quaternion {self.w, self.x, self.y, self.z}")
        # already-unit input is kept as is so that -q is the exact negation of q
        if abs(n - 1.0) > 1e-15:
            for name in "wxyz":
                object.__setattr__(self, name, float(getattr(self, name)) / n)
        else:
            for name in "wxyz":
                object.__setattr__(self, name, float(getattr(self, name)))

    @classmethod
    def identity(cls) -> Quaternion:
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, a) -> Quaternion:
        w, x, y, z = (float(v) for v in a)
        return cls(w, x, y, z)

    @classmethod
    def from_rotvec(cls, rotvec) -> Quaternion:
        """Quaternion of a rotation by ``|rotvec|`` radians about ``rotvec``."""
        v = np.asarray(rotvec, dtype=float)
        angle = float(np.linalg.norm(v))
        if angle < 1e-12:
            # second-order expansion keeps the map smooth at zero
            return cls(1.0 - angle * angle / 8.0, *(0.5 * v))
        s = math.sin(0.5 * angle) / angle
        return cls(math.cos(0.5 * angle), *(s * v))

    @classmethod
    def from_matrix(cls, m) -> Quaternion:
        return matrix_to_quat(m)

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def __neg__(self) -> Quaternion:
        return Quaternion(-self.w, -self.x, -self.y, -self.z)

    def __mul__(self, other: Quaternion) -> Quaternion:
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        return Quaternion(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )

    def conjugate(self) -> Quaternion:
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    def canonical(self) -> Quaternion:
        """Sign representative with ``w >= 0`` (ties broken on x, then y, then z)."""
        for c in (self.w, self.x, self.y, self.z):
            if c > 0:
                return self
            if c < 0:
                return -self
        return self

    def to_matrix(self) -> np.ndarray:
        return quat_to_matrix(self)


def quat_to_matrix(q: Quaternion) -> np.ndarray:
    w, x, y, z = q.w, q.x, q.y, q.z
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(m) -> Quaternion:
    """Shepperd's method; the result is canonical (``w >= 0``)."""
    m = np.asarray(m, dtype=float)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    diag = (tr, m[0, 0], m[1, 1], m[2, 2])
    k = int(np.argmax(diag))
    if k == 0:
        s = 2.0 * math.sqrt(1.0 + tr)
        q = (0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s)
    elif k == 1:
        s = 2.0 * math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
        q = ((m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s)
    elif k == 2:
        s = 2.0 * math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
        q = ((m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s)
    else:
        s = 2.0 * math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
        q = ((m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s)
    return Quaternion(*q).canonical()


def geodesic_angle(q1: Quaternion, q2: Quaternion) -> float:
    """Rotation angle between two orientations, ``2 arccos |<q1, q2>|``, in [0, pi].

    Evaluated as ``4 atan2(|a - b|, |a + b|)`` with ``b`` sign-aligned to
    ``a``; equal for unit quaternions, but arccos loses about 1e-8 rad near
    zero angle.
    """
    a, b = q1.as_array(), q2.as_array()
    if a @ b < 0:
        b = -b
    return min(4.0 * math.atan2(float(np.linalg.norm(a - b)), float(np.linalg.norm(a + b))), math.pi)


def skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


@dataclass(frozen=True)
class Pose:
    """Object-to-camera rigid transform. ``translation`` is in meters."""

    rotation: Quaternion
    translation: tuple[float, float, float]

    def __post_init__(self):
        t = tuple(float(v) for v in self.translation)
        if len(t) != 3 or not all(math.isfinite(v) for v in t):
            raise ValueError(f"translation must be 3 finite values, got {self.translation!r}")
        object.__setattr__(self, "translation", t)

    @classmethod
    def from_rt(cls, R, t) -> Pose:
        return cls(matrix_to_quat(R), tuple(np.asarray(t, dtype=float).ravel()))

    @property
    def R(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    @property
    def t(self) -> np.ndarray:
        return np.array(self.translation)

    def transform(self, points) -> np.ndarray:
        """Body-frame points (N, 3) or (3,) to camera frame."""
        p = np.asarray(points, dtype=float)
        return p @ self.R.T + self.t

    def inverse(self) -> Pose:
        qi = self.rotation.conjugate()
        return Pose(qi, tuple(-(quat_to_matrix(qi) @ self.t)))

    def compose(self, other: Pose) -> Pose:
        """``self ∘ other``: apply ``other`` first."""
        return Pose(self.rotation * other.rotation, tuple(self.R @ other.t + self.t))

    def canonical(self) -> Pose:
        return Pose(self.rotation.canonical(), self.translation)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if int(self.width) != self.width or int(self.height) != self.height or self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive integers")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @classmethod
    def default(cls) -> CameraIntrinsics:
        return cls(1000.0, 1000.0, 128.0, 128.0, 256, 256)

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}


def project(pose: Pose, cam: CameraIntrinsics, point) -> np.ndarray:
    """Pixel coordinates ``(u, v)`` of one body-frame point."""
    return project_points(pose, cam, np.asarray(point, dtype=float)[None, :])[0]


def project_points(pose: Pose, cam: CameraIntrinsics, points) -> np.ndarray:
    """Vectorized :func:`project` over an (N, 3) array; raises if any depth is non-positive."""
    pc = pose.transform(np.asarray(points, dtype=float).reshape(-1, 3))
    z = pc[:, 2]
    if np.any(z <= DEPTH_EPSILON):
        bad = int(np.argmax(z <= DEPTH_EPSILON))
        raise NonPositiveDepth(f"point {bad} has camera depth {z[bad]:.3g} m")
    u = cam.fx * (pc[:, 0] / z) + cam.cx
    v = cam.fy * (pc[:, 1] / z) + cam.cy
    return np.stack([u, v], axis=1)
