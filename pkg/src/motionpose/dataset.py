"""Loading the on-disk sequence layout and sampling frame triplets.

Layout::

    root/meta.json                    camera intrinsics and spacecraft model
    root/seq_NNN/frames/FFFFFF.pgm    8-bit grayscale frames
    root/seq_NNN/annotations.jsonl    one frame record per line

Quaternions in annotations are read as Hamilton, scalar-first ``[w, x, y, z]``
object-to-camera rotations. Datasets with other conventions (or full-frame
images that need a bounding-box crop) should be converted into this layout
before loading.
"""

from __future__ import annotations

import json
import numbers
from collections.abc import Sized
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BboxInvariantViolation, MissingMeta, SchemaViolation
from .geometry import CameraIntrinsics, Pose, Quaternion
from .simulation import FrameRecord, SpacecraftModel, keypoint_bbox, read_pgm

DEFAULT_STRIDE = 7
BBOX_TOLERANCE = 1e-6


@dataclass
class Sequence:
    sequence_id: str
    records: list[FrameRecord]
    image_paths: list | None = None
    images: list | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.records)

    def image(self, t: int) -> np.ndarray:
        if self.images:
            return self.images[t]
        if t not in self._cache:
            if not self.image_paths:
                raise FileNotFoundError(f"sequence {self.sequence_id} has no images")
            path = self.image_paths[t]
            if not Path(path).is_file():
                raise FileNotFoundError(f"missing frame image {path}")
            self._cache.clear()  # keep at most one frame per sequence around
            self._cache[t] = read_pgm(path)
        return self._cache[t]


@dataclass
class SequenceDataset:
    root: Path | None
    camera: CameraIntrinsics
    model: SpacecraftModel
    sequences: list[Sequence]

    @classmethod
    def from_synthetic(cls, seqs, model=None, cam=None) -> SequenceDataset:
        model = model or SpacecraftModel.box()
        cam = cam or CameraIntrinsics.default()
        return cls(None, cam, model,
                   [Sequence(f"seq_{k:03d}", s.records, images=s.images) for k, s in enumerate(seqs)])


def _is_num(v) -> bool:
    return isinstance(v, numbers.Real) and not isinstance(v, bool)


def _check_vec(obj, key, n, where):
    v = obj.get(key)
    if not isinstance(v, list) or len(v) != n or not all(_is_num(c) for c in v):
        raise SchemaViolation(f"{where}: field {key!r} must be a list of {n} numbers")
    return [float(c) for c in v]


def _parse_record(line: str, where: str) -> FrameRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"{where}: invalid JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise SchemaViolation(f"{where}: expected a JSON object")
    for key in ("frame_index", "q", "t", "keypoints_2d", "bbox", "visibility"):
        if key not in obj:
            raise SchemaViolation(f"{where}: missing field {key!r}")
    if not isinstance(obj["frame_index"], int) or isinstance(obj["frame_index"], bool):
        raise SchemaViolation(f"{where}: field 'frame_index' must be an integer")
    q = _check_vec(obj, "q", 4, where)
    t = _check_vec(obj, "t", 3, where)
    kp = obj["keypoints_2d"]
    if not isinstance(kp, list) or len(kp) != 8:
        raise SchemaViolation(f"{where}: field 'keypoints_2d' must hold 8 points")
    kp2d = np.array([_check_vec({"p": p}, "p", 2, f"{where} keypoints_2d[{i}]") for i, p in enumerate(kp)])
    bbox = tuple(_check_vec(obj, "bbox", 4, where))
    vis = obj["visibility"]
    if not isinstance(vis, list) or len(vis) != 8 or not all(isinstance(b, bool) for b in vis):
        raise SchemaViolation(f"{where}: field 'visibility' must be 8 booleans")
    try:
        pose = Pose(Quaternion(*q), tuple(t))
    except ValueError as exc:
        raise SchemaViolation(f"{where}: {exc}") from None
    return FrameRecord(obj["frame_index"], pose, kp2d, bbox, tuple(vis))


def _check_bbox(rec: FrameRecord, cam: CameraIntrinsics, where: str) -> None:
    expect = keypoint_bbox(rec.keypoints_2d, cam.width, cam.height)
    if not np.allclose(rec.bbox, expect, rtol=0, atol=BBOX_TOLERANCE):
        raise BboxInvariantViolation(f"{where}: bbox {list(rec.bbox)} differs from recomputed {list(expect)}")
    umin, vmin, umax, vmax = rec.bbox
    if not (umin < umax and vmin < vmax):
        raise BboxInvariantViolation(f"{where}: degenerate bbox {list(rec.bbox)}")


def load_dataset(path) -> SequenceDataset:
    """Load and validate a dataset directory. Images are read lazily."""
    root = Path(path)
    meta_path = root / "meta.json"
    if not meta_path.is_file():
        raise MissingMeta(f"no meta.json in {root}")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        cam = CameraIntrinsics(**{k: meta["camera"][k] for k in ("fx", "fy", "cx", "cy", "width", "height")})
        model = SpacecraftModel(tuple(map(tuple, meta["model"]["keypoints"])),
                                tuple(map(tuple, meta["model"]["edges"])))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaViolation(f"{meta_path}: {exc}") from None

    seq_names = meta.get("sequences") or sorted(p.name for p in root.glob("seq_*") if p.is_dir())
    sequences = []
    for name in seq_names:
        ann = root / name / "annotations.jsonl"
        if not ann.is_file():
            raise SchemaViolation(f"{ann}: annotations file missing")
        records = []
        with ann.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                where = f"{ann}:{lineno}"
                rec = _parse_record(line, where)
                _check_bbox(rec, cam, where)
                records.append(rec)
        records.sort(key=lambda r: r.frame_index)
        frames = root / name / "frames"
        paths = [frames / f"{r.frame_index:06d}.pgm" for r in records]
        sequences.append(Sequence(name, records, image_paths=paths))
    return SequenceDataset(root, cam, model, sequences)


def sample_triplets(sequence, stride: int = DEFAULT_STRIDE) -> list[tuple[int, int, int]]:
    """All ``(t - stride, t, t + stride)`` with both neighbours inside the sequence.

    ``sequence`` may be a length or anything with ``len()``.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    n = sequence if isinstance(sequence, int) else len(sequence) if isinstance(sequence, Sized) else int(sequence)
    return [(t - stride, t, t + stride) for t in range(stride, n - stride)]
