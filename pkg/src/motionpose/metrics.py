"""Keypoint and pose accuracy metrics, per-sequence aggregation and PCK filtering.

PCK normalises by the diagonal of the bounding box around the *predicted*
keypoints. Rotation errors are kept in radians; ``E_P`` always adds the
radian rotation error to the relative translation error.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DegenerateGroundTruthTranslation, EmptyInput, EmptyKeypoints
from .geometry import Pose, geodesic_angle

PCK_THRESHOLDS = (0.01, 0.05, 0.10)
FILTER_THRESHOLDS = (12.5, 25.0, 50.0, 90.0)
MIN_BBOX_DIAGONAL = 1.0


def bbox_diagonal(points) -> float:
    """Diagonal of the axis-aligned box around the finite points, floored at 1 px."""
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    p = p[np.all(np.isfinite(p), axis=1)]
    if len(p) == 0:
        return MIN_BBOX_DIAGONAL
    span = p.max(axis=0) - p.min(axis=0)
    return max(float(math.hypot(span[0], span[1])), MIN_BBOX_DIAGONAL)


def pck(pred, gt, threshold_fraction: float) -> float:
    """Percentage of keypoints within ``threshold_fraction`` of the predicted-bbox diagonal.

    Missing predictions (NaN rows) count as incorrect.
    """
    pred = np.asarray(pred, dtype=float).reshape(-1, 2)
    gt = np.asarray(gt, dtype=float).reshape(-1, 2)
    if len(gt) == 0:
        raise EmptyKeypoints("no keypoints to score")
    if pred.shape != gt.shape:
        raise ValueError(f"prediction shape {pred.shape} does not match ground truth {gt.shape}")
    if not threshold_fraction > 0:
        raise ValueError("threshold_fraction must be positive")
    dist = np.linalg.norm(pred - gt, axis=1)
    correct = np.where(np.isfinite(dist), dist <= threshold_fraction * bbox_diagonal(pred), False)
    return 100.0 * int(np.count_nonzero(correct)) / len(gt)


def pose_errors(pred: Pose, gt: Pose) -> tuple[float, float, float]:
    """``(E_t, E_q, E_P)``: meters, radians, unitless."""
    t_norm = float(np.linalg.norm(gt.t))
    if t_norm <= 1e-9:
        raise DegenerateGroundTruthTranslation("ground-truth translation is (near) zero; E_P undefined")
    e_t = float(np.linalg.norm(pred.t - gt.t))
    e_q = geodesic_angle(pred.rotation, gt.rotation)
    return e_t, e_q, e_q + e_t / t_norm


@dataclass
class FrameEvaluation:
    sequence_id: str
    frame_index: int
    pck_at: dict  # threshold fraction -> percentage
    predicted_bbox_diagonal: float
    gt_translation_norm: float
    e_t: float | None = None
    e_q: float | None = None
    e_p: float | None = None
    pose_failed: bool = False
    failure_reason: str | None = None
    detected: int = 8

    @property
    def pck10(self) -> float:
        return self.pck_at[0.10]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pck_at"] = {_pct_key(k): v for k, v in sorted(self.pck_at.items())}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> FrameEvaluation:
        d = dict(d)
        d["pck_at"] = {float(k) / 100.0: v for k, v in d["pck_at"].items()}
        return cls(**d)


def _pct_key(fraction: float) -> str:
    return f"{fraction * 100:g}"


def evaluate_frame(sequence_id, frame_index, pred_kp, gt_kp, pred_pose: Pose | None, gt_pose: Pose,
                   failure_reason: str | None = None, thresholds=PCK_THRESHOLDS) -> FrameEvaluation:
    pred_kp = np.asarray(pred_kp, dtype=float)
    ev = FrameEvaluation(
        sequence_id=str(sequence_id),
        frame_index=int(frame_index),
        pck_at={t: pck(pred_kp, gt_kp, t) for t in thresholds},
        predicted_bbox_diagonal=bbox_diagonal(pred_kp),
        gt_translation_norm=float(np.linalg.norm(gt_pose.t)),
        detected=int(np.count_nonzero(np.all(np.isfinite(pred_kp), axis=1))),
    )
    if pred_pose is None:
        ev.pose_failed = True
        ev.failure_reason = failure_reason or "no pose"
    else:
        ev.e_t, ev.e_q, ev.e_p = pose_errors(pred_pose, gt_pose)
    return ev


def _stats(values) -> dict:
    v = np.asarray([x for x in values if x is not None], dtype=float)
    if v.size == 0:
        return {"mean": None, "median": None}
    return {"mean": float(np.mean(v)), "median": float(np.median(v))}


@dataclass
class SequenceReport:
    sequence_id: str
    frame_count: int
    metrics: dict  # name -> {"mean", "median"}
    pck10_per_frame: list
    pose_failures: int = 0
    frames: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "sequence_id": self.sequence_id,
            "frame_count": self.frame_count,
            "metrics": self.metrics,
            "pck10_per_frame": self.pck10_per_frame,
            "pose_failures": self.pose_failures,
            "frames": [f.to_dict() for f in self.frames],
        }


def frame_metric_columns(frames) -> dict:
    ok = [f for f in frames if not f.pose_failed]
    cols = {f"pck@{_pct_key(t)}": [f.pck_at[t] for f in frames] for t in sorted(frames[0].pck_at)}
    cols["e_t"] = [f.e_t for f in ok]
    cols["e_t_rel"] = [f.e_t / f.gt_translation_norm for f in ok]
    cols["e_q"] = [f.e_q for f in ok]
    cols["e_q_deg"] = [math.degrees(f.e_q) for f in ok]
    cols["e_p"] = [f.e_p for f in ok]
    return cols


def aggregate(frames: list[FrameEvaluation], sequence_id) -> SequenceReport:
    """Per-sequence means and medians. Pose metrics skip frames whose pose failed."""
    if not frames:
        raise EmptyInput(f"sequence {sequence_id} has no evaluated frames")
    metrics = {name: _stats(vals) for name, vals in frame_metric_columns(frames).items()}
    return SequenceReport(
        sequence_id=str(sequence_id),
        frame_count=len(frames),
        metrics=metrics,
        pck10_per_frame=[f.pck10 for f in frames],
        pose_failures=sum(f.pose_failed for f in frames),
        frames=list(frames),
    )


def filtering_table(frames: list[FrameEvaluation], pck10_thresholds=FILTER_THRESHOLDS) -> list[dict]:
    """Pose metrics over the frames whose PCK@10 exceeds each threshold.

    First row is unfiltered. ``data_percent`` is the share of frames kept;
    pose means ignore failed poses. Rotation is reported in degrees.
    """
    total = len(frames)
    rows = [_filter_row("No filtering", None, frames, total)]
    for thr in pck10_thresholds:
        if not 0 <= thr < 100:
            raise ValueError(f"filter threshold {thr} outside [0, 100)")
        kept = [f for f in frames if f.pck10 > thr]
        rows.append(_filter_row(f"PCK>{thr:g}", float(thr), kept, total))
    return rows


def _filter_row(label, threshold, kept, total) -> dict:
    ok = [f for f in kept if not f.pose_failed]

    def mean(vals):
        return float(np.mean(vals)) if len(vals) else None

    return {
        "setup": label,
        "threshold": threshold,
        "data_percent": 100.0 * len(kept) / total if total else 0.0,
        "frames": len(kept),
        "pck10": mean([f.pck10 for f in kept]),
        "e_t": mean([f.e_t for f in ok]),
        "e_q_deg": mean([math.degrees(f.e_q) for f in ok]),
        "e_p": mean([f.e_p for f in ok]),
        "pose_failures": len(kept) - len(ok),
    }
