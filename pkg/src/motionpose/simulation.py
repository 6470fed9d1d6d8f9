"""Synthetic tumbling-spacecraft sequences.

A sequence is a list of :class:`~motionpose.geometry.Pose` (constant body
angular velocity plus a translational random walk), the projected keypoint
tracks as :class:`FrameRecord` objects, and optional wireframe renders.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FrustumRejectionExceeded, NonPositiveDepth
from .geometry import CameraIntrinsics, Pose, Quaternion, project_points

BBOX_PADDING = 5.0
MAX_TRAJECTORY_ATTEMPTS = 1000


@dataclass(frozen=True)
class SpacecraftModel:
    keypoints: tuple  # 8 x (x, y, z) meters, body frame
    edges: tuple  # (i, j) index pairs
    names: tuple = ()

    def __post_init__(self):
        kp = np.asarray(self.keypoints, dtype=float)
        if kp.shape != (8, 3):
            raise ValueError(f"expected 8 3D keypoints, got shape {kp.shape}")
        centered = kp - kp.mean(axis=0)
        if np.linalg.matrix_rank(centered, tol=1e-9) < 3:
            raise ValueError("keypoints are coplanar")
        for i, j in self.edges:
            if not (0 <= i < 8 and 0 <= j < 8) or i == j:
                raise ValueError(f"bad edge ({i}, {j})")
        object.__setattr__(self, "keypoints", tuple(tuple(float(c) for c in p) for p in kp))
        object.__setattr__(self, "edges", tuple((int(i), int(j)) for i, j in self.edges))

    @classmethod
    def box(cls, size=(1.0, 1.0, 0.5)) -> SpacecraftModel:
        """Rectangular box centred on the body origin, corners as keypoints."""
        hx, hy, hz = (0.5 * s for s in size)
        corners, names = [], []
        for sx in (-1, 1):
            for sy in (-1, 1):
                for sz in (-1, 1):
                    corners.append((sx * hx, sy * hy, sz * hz))
                    names.append("corner_%sx%sy%sz" % tuple("+" if s > 0 else "-" for s in (sx, sy, sz)))
        # corners differing in exactly one coordinate share an edge
        edges = [(i, j) for i in range(8) for j in range(i + 1, 8) if bin(i ^ j).count("1") == 1]
        return cls(tuple(corners), tuple(edges), tuple(names))

    @property
    def points(self) -> np.ndarray:
        return np.array(self.keypoints)

    def to_dict(self) -> dict:
        return {"keypoints": [list(p) for p in self.keypoints], "edges": [list(e) for e in self.edges]}


@dataclass(frozen=True)
class TrajectoryConfig:
    frame_count: int = 30
    angular_rate_range: tuple = (0.5, 2.0)  # degrees / frame
    translation_walk_sigma: float = 0.01  # meters / frame
    depth_range: tuple = (5.0, 15.0)  # meters
    frustum_margin: float = 8.0  # pixels
    seed: int = 0

    def __post_init__(self):
        if self.frame_count < 15:
            raise ValueError("frame_count must be >= 15 to support stride-7 triplets")
        lo, hi = self.angular_rate_range
        if not 0 <= lo <= hi:
            raise ValueError(f"bad angular_rate_range {self.angular_rate_range}")
        dlo, dhi = self.depth_range
        if not 0 < dlo <= dhi:
            raise ValueError(f"bad depth_range {self.depth_range}")
        if self.translation_walk_sigma < 0 or self.frustum_margin < 0:
            raise ValueError("sigma and margin must be non-negative")


@dataclass(eq=False)
class FrameRecord:
    frame_index: int
    pose: Pose
    keypoints_2d: np.ndarray  # (8, 2) pixels
    bbox: tuple  # (umin, vmin, umax, vmax)
    visibility: tuple  # 8 bools


@dataclass(frozen=True)
class RenderConfig:
    image_size: int = 256
    background_star_count: int = 40
    sensor_noise_sigma: float = 0.0
    blob_sigma: float = 1.5
    line_intensity: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.image_size < 64:
            raise ValueError("image_size must be >= 64")
        if self.sensor_noise_sigma < 0:
            raise ValueError("sensor_noise_sigma must be >= 0")


def _random_unit_quaternion(rng: np.random.Generator) -> Quaternion:
    return Quaternion(*rng.standard_normal(4)).canonical()


def _random_axis(rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


def _in_frustum(kp2d: np.ndarray, cam: CameraIntrinsics, margin: float) -> bool:
    u, v = kp2d[:, 0], kp2d[:, 1]
    return bool(np.all((u >= margin) & (u <= cam.width - margin) & (v >= margin) & (v <= cam.height - margin)))


def generate_trajectory(model: SpacecraftModel, cam: CameraIntrinsics, config: TrajectoryConfig) -> list[Pose]:
    """Sample a tumbling trajectory whose keypoints stay inside the image.

    Whole trajectories are resampled until every keypoint of every frame
    projects at least ``frustum_margin`` pixels inside the image.
    """
    rng = np.random.default_rng(config.seed)
    pts = model.points
    for _ in range(MAX_TRAJECTORY_ATTEMPTS):
        poses = _sample_trajectory(rng, cam, config)
        try:
            ok = all(_in_frustum(project_points(p, cam, pts), cam, config.frustum_margin) for p in poses)
        except NonPositiveDepth:
            ok = False
        if ok:
            return poses
    raise FrustumRejectionExceeded(
        f"no trajectory kept all keypoints inside the frustum after {MAX_TRAJECTORY_ATTEMPTS} attempts"
    )


def _sample_trajectory(rng: np.random.Generator, cam: CameraIntrinsics, config: TrajectoryConfig) -> list[Pose]:
    dlo, dhi = config.depth_range
    z = rng.uniform(dlo, dhi)
    # start near the principal ray
    off = rng.uniform(-20.0, 20.0, size=2)
    t = np.array([off[0] * z / cam.fx, off[1] * z / cam.fy, z])
    q = _random_unit_quaternion(rng)
    rate = math.radians(rng.uniform(*config.angular_rate_range))
    step = Quaternion.from_rotvec(rate * _random_axis(rng))

    poses = [Pose(q, tuple(t))]
    for _ in range(config.frame_count - 1):
        q = q * step  # body-frame angular velocity
        if config.translation_walk_sigma > 0:
            t = t + rng.normal(0.0, config.translation_walk_sigma, size=3)
            # reflect depth back into range
            if t[2] < dlo:
                t[2] = min(2 * dlo - t[2], dhi)
            elif t[2] > dhi:
                t[2] = max(2 * dhi - t[2], dlo)
        poses.append(Pose(q, tuple(t)))
    return poses


def keypoint_bbox(kp2d: np.ndarray, width: int, height: int, padding: float = BBOX_PADDING) -> tuple:
    """Axis-aligned hull padded by ``padding`` and clamped to ``[0, W-1] x [0, H-1]``."""
    kp2d = np.asarray(kp2d, dtype=float)
    umin, vmin = kp2d.min(axis=0) - padding
    umax, vmax = kp2d.max(axis=0) + padding
    return (
        float(np.clip(umin, 0, width - 1)),
        float(np.clip(vmin, 0, height - 1)),
        float(np.clip(umax, 0, width - 1)),
        float(np.clip(vmax, 0, height - 1)),
    )


def project_sequence(poses: list[Pose], model: SpacecraftModel, cam: CameraIntrinsics) -> list[FrameRecord]:
    pts = model.points
    records = []
    for i, pose in enumerate(poses):
        kp = project_points(pose, cam, pts)
        vis = (kp[:, 0] >= 0) & (kp[:, 0] <= cam.width - 1) & (kp[:, 1] >= 0) & (kp[:, 1] <= cam.height - 1)
        records.append(FrameRecord(i, pose, kp, keypoint_bbox(kp, cam.width, cam.height), tuple(bool(b) for b in vis)))
    return records


def _supersample_grid(size: int) -> tuple[np.ndarray, np.ndarray]:
    # 2x2 subsamples per pixel; full-resolution pixel centres sit on integers
    c = (np.arange(2 * size) - 0.5) / 2.0
    return np.meshgrid(c, c)


def _segment_distance(uu, vv, a, b):
    d = b - a
    L2 = float(d @ d)
    if L2 == 0.0:
        return np.hypot(uu - a[0], vv - a[1])
    s = np.clip(((uu - a[0]) * d[0] + (vv - a[1]) * d[1]) / L2, 0.0, 1.0)
    return np.hypot(uu - (a[0] + s * d[0]), vv - (a[1] + s * d[1]))


def render_frame(record: FrameRecord, model: SpacecraftModel, rc: RenderConfig) -> np.ndarray:
    """Grayscale wireframe render in [0, 1], shape ``(image_size, image_size)``.

    Lines and keypoint blobs are evaluated on a 2x supersampled grid and box
    filtered; stars and sensor noise come from the per-frame stream
    ``seed ^ frame_index``.
    """
    n = rc.image_size
    uu, vv = _supersample_grid(n)
    kp = np.asarray(record.keypoints_2d, dtype=float)
    hi = np.zeros_like(uu)

    half_width, falloff = 0.5, 0.5
    for i, j in model.edges:
        a, b = kp[i], kp[j]
        lo_u = max(int(np.floor(2 * (min(a[0], b[0]) - 2))), 0)
        hi_u = min(int(np.ceil(2 * (max(a[0], b[0]) + 2))) + 1, 2 * n)
        lo_v = max(int(np.floor(2 * (min(a[1], b[1]) - 2))), 0)
        hi_v = min(int(np.ceil(2 * (max(a[1], b[1]) + 2))) + 1, 2 * n)
        if lo_u >= hi_u or lo_v >= hi_v:
            continue
        sl = np.s_[lo_v:hi_v, lo_u:hi_u]
        dist = _segment_distance(uu[sl], vv[sl], a, b)
        cover = np.clip((half_width + falloff - dist) / falloff, 0.0, 1.0)
        np.maximum(hi[sl], rc.line_intensity * cover, out=hi[sl])

    r = 4.0 * rc.blob_sigma
    for p in kp:
        lo_u, hi_u = max(int(2 * (p[0] - r)), 0), min(int(2 * (p[0] + r)) + 2, 2 * n)
        lo_v, hi_v = max(int(2 * (p[1] - r)), 0), min(int(2 * (p[1] + r)) + 2, 2 * n)
        if lo_u >= hi_u or lo_v >= hi_v:
            continue
        sl = np.s_[lo_v:hi_v, lo_u:hi_u]
        blob = np.exp(-((uu[sl] - p[0]) ** 2 + (vv[sl] - p[1]) ** 2) / (2 * rc.blob_sigma**2))
        np.maximum(hi[sl], blob, out=hi[sl])

    img = hi.reshape(n, 2, n, 2).mean(axis=(1, 3))

    rng = np.random.default_rng(rc.seed ^ record.frame_index)
    if rc.background_star_count > 0:
        rows = rng.integers(0, n, rc.background_star_count)
        cols = rng.integers(0, n, rc.background_star_count)
        vals = rng.uniform(0.2, 0.8, rc.background_star_count)
        img[rows, cols] = np.maximum(img[rows, cols], vals)
    if rc.sensor_noise_sigma > 0:
        img = img + rng.normal(0.0, rc.sensor_noise_sigma, size=img.shape)
    return np.clip(img, 0.0, 1.0)


@dataclass
class SyntheticSequence:
    """One generated sequence held in memory."""

    records: list[FrameRecord]
    images: list[np.ndarray] = field(default_factory=list)


def _generate_one(args) -> SyntheticSequence:
    i, model, cam, trajectory, render, seed = args
    traj_seed, render_seed = np.random.SeedSequence([seed, i]).generate_state(2, dtype=np.uint64)
    tcfg = replace(trajectory, seed=int(traj_seed))
    records = project_sequence(generate_trajectory(model, cam, tcfg), model, cam)
    images = []
    if render is not None:
        rcfg = replace(render, seed=int(render_seed))
        images = [render_frame(r, model, rcfg) for r in records]
    return SyntheticSequence(records, images)


def generate_dataset(
    n_sequences: int,
    model: SpacecraftModel | None = None,
    cam: CameraIntrinsics | None = None,
    trajectory: TrajectoryConfig | None = None,
    render: RenderConfig | None = None,
    seed: int = 0,
    jobs: int = 1,
) -> list[SyntheticSequence]:
    """Generate ``n_sequences`` independent sequences.

    Sequence ``i`` draws its trajectory and render seeds from
    ``SeedSequence([seed, i])``, so output does not depend on generation
    order or on ``jobs`` (threads used to generate sequences concurrently).
    """
    model = model or SpacecraftModel.box()
    cam = cam or CameraIntrinsics.default()
    trajectory = trajectory or TrajectoryConfig()
    work = [(i, model, cam, trajectory, render, seed) for i in range(n_sequences)]
    if jobs > 1 and n_sequences > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_generate_one, work))
    return [_generate_one(w) for w in work]


def write_pgm(path, image: np.ndarray) -> None:
    """Write a [0, 1] float image as binary 8-bit PGM (P5)."""
    arr = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path, format="PPM")


def read_pgm(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float64) / 255.0


def record_to_json(rec: FrameRecord) -> dict:
    q = rec.pose.rotation
    return {
        "frame_index": int(rec.frame_index),
        "q": [q.w, q.x, q.y, q.z],
        "t": list(rec.pose.translation),
        "keypoints_2d": [[float(u), float(v)] for u, v in rec.keypoints_2d],
        "bbox": [float(b) for b in rec.bbox],
        "visibility": [bool(b) for b in rec.visibility],
    }


def export_dataset(
    destination,
    sequences: list,
    images: list | None = None,
    model: SpacecraftModel | None = None,
    cam: CameraIntrinsics | None = None,
) -> dict:
    """Write sequences to the on-disk dataset layout.

    ``sequences`` holds lists of :class:`FrameRecord` (or
    :class:`SyntheticSequence` objects, whose images are then used when
    ``images`` is None). Returns a summary of the written paths. Floats are
    written with ``repr`` precision so values reload bit-exactly.
    """
    model = model or SpacecraftModel.box()
    cam = cam or CameraIntrinsics.default()
    root = Path(destination)
    recs_per_seq, imgs_per_seq = [], []
    for k, s in enumerate(sequences):
        if isinstance(s, SyntheticSequence):
            recs_per_seq.append(s.records)
            imgs_per_seq.append(images[k] if images is not None else s.images)
        else:
            recs_per_seq.append(list(s))
            imgs_per_seq.append(images[k] if images is not None else [])

    summary = {"root": str(root), "meta": None, "annotations": [], "images": []}
    try:
        root.mkdir(parents=True, exist_ok=True)
        meta = {
            "camera": cam.to_dict(),
            "model": model.to_dict(),
            "units": {"length": "meters", "image": "pixels"},
            "sequences": [f"seq_{k:03d}" for k in range(len(recs_per_seq))],
        }
        meta_path = root / "meta.json"
        meta_path.write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
        summary["meta"] = str(meta_path)
        for k, (recs, imgs) in enumerate(zip(recs_per_seq, imgs_per_seq)):
            seq_dir = root / f"seq_{k:03d}"
            frames_dir = seq_dir / "frames"
            frames_dir.mkdir(parents=True, exist_ok=True)
            ann = seq_dir / "annotations.jsonl"
            with ann.open("w", encoding="utf-8") as fh:
                for rec in recs:
                    fh.write(json.dumps(record_to_json(rec)) + "\n")
            summary["annotations"].append(str(ann))
            for rec, img in zip(recs, imgs):
                p = frames_dir / f"{rec.frame_index:06d}.pgm"
                write_pgm(p, img)
                summary["images"].append(str(p))
    except OSError as exc:
        where = exc.filename or root
        raise type(exc)(exc.errno, f"cannot write dataset under {root}: {exc.strerror}", str(where)) from exc
    return summary
