"""Keypoint prediction sources: noisy oracle, flow tracker, heatmap import.

Every predictor returns a :class:`Prediction` in image pixels; keypoints that
were not detected are NaN rows with zero confidence.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ChannelCountMismatch, MalformedFile, NotDetected, TrackingLost
from .flow import FlowContext, FlowParams, sample_displacement
from .heatmaps import MotionEncodingParams, decode, read_heatmap_file, to_image_coords

log = logging.getLogger(__name__)

N_KEYPOINTS = 8


@dataclass
class Prediction:
    keypoints: np.ndarray  # (8, 2), NaN where not detected
    confidence: np.ndarray  # (8,)
    reseeded: np.ndarray = field(default_factory=lambda: np.zeros(N_KEYPOINTS, dtype=bool))

    @property
    def detected(self) -> np.ndarray:
        return np.all(np.isfinite(self.keypoints), axis=1)


@dataclass(frozen=True)
class OracleNoiseConfig:
    pixel_sigma: float = 0.0
    outlier_rate: float = 0.0
    outlier_magnitude: float = 50.0
    seed: int = 0

    def __post_init__(self):
        if self.pixel_sigma < 0:
            raise ValueError("pixel_sigma must be >= 0")
        if not 0 <= self.outlier_rate <= 1:
            raise ValueError("outlier_rate must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def oracle_predict(gt_keypoints, config: OracleNoiseConfig = OracleNoiseConfig(),
                   sequence_index: int = 0, frame_index: int = 0) -> Prediction:
    """Ground truth plus Gaussian noise and occasional gross outliers.

    The stream is keyed on ``(seed, sequence_index, frame_index)`` and every
    draw is made regardless of the configuration, so keypoint ``k`` always
    consumes the same random variates.
    """
    gt = np.asarray(gt_keypoints, dtype=float).reshape(-1, 2)
    n = len(gt)
    rng = np.random.default_rng([config.seed, sequence_index, frame_index])
    noise = rng.standard_normal((n, 2))
    u = rng.random(n)
    ang = rng.uniform(0.0, 2.0 * math.pi, n)
    kp = gt + config.pixel_sigma * noise
    out = u < config.outlier_rate
    kp[out] += config.outlier_magnitude * np.column_stack([np.cos(ang[out]), np.sin(ang[out])])
    return Prediction(kp, np.ones(n))


def flow_propagate_predict(sequence, t: int, flow_params: FlowParams = FlowParams(), init: Prediction | None = None,
                           oracle: OracleNoiseConfig = OracleNoiseConfig(), sequence_index: int = 0) -> Prediction:
    """Propagate ``init`` (the estimate at ``t - 1``) into frame ``t`` with LK.

    Without ``init`` the oracle initialises the track. Keypoints lost by the
    tracker are NaN for this frame; keypoints that arrive NaN in ``init`` are
    re-seeded from the oracle.
    """
    gt = sequence.records[t].keypoints_2d
    if init is None or t == 0:
        p = oracle_predict(gt, oracle, sequence_index, t)
        p.reseeded[:] = True
        return p
    ctx = FlowContext(sequence.image(t - 1), sequence.image(t), flow_params)
    seed_pred = None
    kp = np.full((N_KEYPOINTS, 2), np.nan)
    conf = np.zeros(N_KEYPOINTS)
    reseeded = np.zeros(N_KEYPOINTS, dtype=bool)
    for k in range(N_KEYPOINTS):
        prev = init.keypoints[k]
        if np.all(np.isfinite(prev)):
            try:
                kp[k] = prev + sample_displacement(ctx, prev)
                conf[k] = 1.0
            except TrackingLost:
                log.info("sequence %s frame %d: keypoint %d lost", getattr(sequence, "sequence_id", "?"), t, k)
        else:
            if seed_pred is None:
                seed_pred = oracle_predict(gt, oracle, sequence_index, t)
            kp[k] = seed_pred.keypoints[k]
            conf[k] = 1.0
            reseeded[k] = True
            log.info("sequence %s frame %d: keypoint %d re-seeded from oracle",
                     getattr(sequence, "sequence_id", "?"), t, k)
    return Prediction(kp, conf, reseeded)


def track_sequence(sequence, flow_params: FlowParams = FlowParams(), oracle: OracleNoiseConfig = OracleNoiseConfig(),
                   sequence_index: int = 0, last_frame: int | None = None) -> list[Prediction]:
    """Run the causal tracker over frames ``0 .. last_frame``."""
    last = len(sequence) - 1 if last_frame is None else last_frame
    preds: list[Prediction] = []
    for t in range(last + 1):
        preds.append(flow_propagate_predict(sequence, t, flow_params, preds[-1] if preds else None,
                                            oracle, sequence_index))
    return preds


def import_heatmaps_predict(path, params: MotionEncodingParams = MotionEncodingParams()) -> Prediction:
    """Decode an external MAHM heatmap stack (one channel per keypoint)."""
    maps = read_heatmap_file(path)
    if maps.shape[0] != N_KEYPOINTS:
        raise ChannelCountMismatch(f"{path}: expected {N_KEYPOINTS} channels, found {maps.shape[0]}")
    if maps.shape[1:] != (params.heatmap_size, params.heatmap_size):
        raise MalformedFile(f"{path}: heatmaps are {maps.shape[1:]}, codec expects {params.heatmap_size} px square")
    kp = np.full((N_KEYPOINTS, 2), np.nan)
    conf = np.zeros(N_KEYPOINTS)
    for k, channel in enumerate(maps):
        try:
            xy, c = decode(channel)
        except NotDetected:
            continue
        kp[k] = to_image_coords(xy, params)
        conf[k] = c
    return Prediction(kp, conf)
