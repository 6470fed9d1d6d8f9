import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from motionpose.errors import DegenerateGroundTruthTranslation, EmptyInput, EmptyKeypoints
from motionpose.geometry import Pose, Quaternion
from motionpose.metrics import (
    FILTER_THRESHOLDS,
    FrameEvaluation,
    aggregate,
    bbox_diagonal,
    evaluate_frame,
    filtering_table,
    pck,
    pose_errors,
)

pts = arrays(np.float64, (8, 2), elements=st.floats(-500, 500, allow_nan=False))
fractions = st.floats(0.001, 1.0)


def pck_bruteforce(pred, gt, frac):
    """Direct loop, no shared helpers."""
    us = [p[0] for p in pred if p[0] == p[0] and p[1] == p[1]]
    vs = [p[1] for p in pred if p[0] == p[0] and p[1] == p[1]]
    diag = math.sqrt((max(us) - min(us)) ** 2 + (max(vs) - min(vs)) ** 2) if us else 0.0
    diag = max(diag, 1.0)
    hits = 0
    for (pu, pv), (gu, gv) in zip(pred, gt):
        if pu != pu or pv != pv:
            continue
        if math.sqrt((pu - gu) ** 2 + (pv - gv) ** 2) <= frac * diag:
            hits += 1
    return 100.0 * hits / len(gt)


def test_pck_examples():
    gt = np.random.default_rng(0).uniform(0, 200, (8, 2))
    for t in (0.01, 0.05, 0.1):
        assert pck(gt, gt, t) == 100.0
    # pred box 60 x 80 -> diagonal 100; every keypoint off by exactly 4 px
    pred = np.array([[0, 0], [60, 80], [60, 0], [0, 80], [30, 40], [10, 20], [50, 70], [20, 60]], float)
    gt = pred + np.array([4.0, 0.0])
    assert bbox_diagonal(pred) == 100.0
    assert pck(pred, gt, 0.05) == 100.0
    assert pck(pred, gt, 0.01) == 0.0
    collapsed = np.full((8, 2), 10.0)
    assert pck(collapsed, collapsed + (50, 0), 0.1) == 0.0
    assert bbox_diagonal(collapsed) == 1.0


def test_pck_errors():
    with pytest.raises(EmptyKeypoints):
        pck(np.zeros((0, 2)), np.zeros((0, 2)), 0.1)
    with pytest.raises(ValueError):
        pck(np.zeros((8, 2)), np.zeros((7, 2)), 0.1)
    with pytest.raises(ValueError):
        pck(np.zeros((8, 2)), np.zeros((8, 2)), 0.0)


def test_pck_missing_counts_incorrect():
    gt = np.random.default_rng(1).uniform(0, 200, (8, 2))
    pred = gt.copy()
    pred[[2, 5]] = np.nan
    assert pck(pred, gt, 0.1) == 75.0


def random_pck_case(rng):
    gt = rng.uniform(0, 256, (8, 2))
    pred = gt + rng.normal(0, rng.choice([0.5, 3, 10, 40]), (8, 2))
    if rng.random() < 0.2:
        pred[rng.integers(0, 8)] = np.nan
    return pred, gt, float(rng.choice([0.01, 0.05, 0.1, rng.uniform(0.001, 0.5)]))


def test_pck_bruteforce_1000():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        pred, gt, frac = random_pck_case(rng)
        assert pck(pred, gt, frac) == pck_bruteforce(pred, gt, frac)


@given(pts, pts, fractions)
def test_pck_bruteforce_property(pred, gt, frac):
    assert pck(pred, gt, frac) == pck_bruteforce(pred, gt, frac)


@given(pts, pts, fractions, fractions)
def test_pck_monotone(pred, gt, a, b):
    lo, hi = sorted((a, b))
    assert pck(pred, gt, lo) <= pck(pred, gt, hi)


@given(pts, st.floats(0.25, 4.0))
def test_pck_scale_invariant(gt, s):
    pred = gt + np.random.default_rng(0).normal(0, 5, gt.shape)
    # powers of two scale exactly; other factors can flip knife-edge cases by one ulp
    s = 2.0 ** round(math.log2(s))
    for t in (0.01, 0.05, 0.1):
        assert pck(s * pred, s * gt, t) == pck(pred, gt, t)


def test_pose_errors_examples():
    q = Quaternion(0.5, 0.5, -0.5, 0.5)
    assert pose_errors(Pose(q, (1, 2, 3)), Pose(q, (1, 2, 3))) == (0.0, 0.0, 0.0)
    e_t, e_q, e_p = pose_errors(Pose(Quaternion.identity(), (0, 0, 0)), Pose(Quaternion.identity(), (1, 2, 2)))
    assert e_t == pytest.approx(3.0, abs=1e-12) and e_q == pytest.approx(0.0, abs=1e-12)
    assert e_p == pytest.approx(1.0, abs=1e-12)
    rz = Quaternion(math.cos(math.pi / 4), 0, 0, math.sin(math.pi / 4))
    e_t, e_q, e_p = pose_errors(Pose(rz, (0, 0, 0)), Pose(Quaternion.identity(), (1, 2, 2)))
    assert e_t == pytest.approx(3.0, abs=1e-12)
    assert e_q == pytest.approx(math.pi / 2, abs=1e-12)
    assert e_p == pytest.approx(math.pi / 2 + 1, abs=1e-12)
    with pytest.raises(DegenerateGroundTruthTranslation):
        pose_errors(Pose(q, (1, 0, 0)), Pose(q, (0, 0, 0)))


def test_pose_errors_symmetry():
    rng = np.random.default_rng(3)
    for _ in range(200):
        a = Pose(Quaternion(*rng.standard_normal(4)), tuple(rng.uniform(1, 5, 3)))
        b = Pose(Quaternion(*rng.standard_normal(4)), tuple(rng.uniform(1, 5, 3)))
        assert pose_errors(a, b)[1] == pose_errors(b, a)[1]
        assert pose_errors(Pose(-a.rotation, a.translation), b)[1] == pytest.approx(pose_errors(a, b)[1], abs=1e-15)


def _frame(pck10, e_t=0.1, e_q=0.01, t_norm=10.0, failed=False, seq="s", i=0):
    ev = FrameEvaluation(seq, i, {0.01: 0.0, 0.05: 50.0, 0.10: pck10}, 100.0, t_norm)
    if failed:
        ev.pose_failed, ev.failure_reason = True, "x"
    else:
        ev.e_t, ev.e_q, ev.e_p = e_t, e_q, e_q + e_t / t_norm
    return ev


def test_evaluate_frame_consistency():
    rng = np.random.default_rng(4)
    gt = Pose(Quaternion(*rng.standard_normal(4)), (0.1, -0.2, 8.0))
    pred = Pose(Quaternion(*rng.standard_normal(4)), (0.2, -0.1, 8.3))
    gt_kp = rng.uniform(0, 256, (8, 2))
    ev = evaluate_frame("seq_000", 3, gt_kp + 1, gt_kp, pred, gt)
    assert abs(ev.e_p - (ev.e_q + ev.e_t / ev.gt_translation_norm)) <= 1e-12
    assert set(ev.pck_at) == {0.01, 0.05, 0.10}
    failed = evaluate_frame("seq_000", 4, np.full((8, 2), np.nan), gt_kp, None, gt, "only 0 keypoints detected")
    assert failed.pose_failed and failed.e_p is None and failed.pck10 == 0.0 and failed.detected == 0
    assert FrameEvaluation.from_dict(ev.to_dict()) == ev


def test_aggregate_examples():
    one = aggregate([_frame(80.0)], "s")
    assert one.metrics["pck@10"] == {"mean": 80.0, "median": 80.0}
    assert one.metrics["e_p"]["mean"] == _frame(80.0).e_p
    two = aggregate([_frame(80.0, e_t=0.1), _frame(100.0, e_t=0.3, i=1)], "s")
    assert two.metrics["pck@10"] == {"mean": 90.0, "median": 90.0}
    assert two.pck10_per_frame == [80.0, 100.0]
    recomputed = np.mean([f.e_q + f.e_t / f.gt_translation_norm for f in two.frames])
    assert abs(two.metrics["e_p"]["mean"] - recomputed) <= 1e-12
    assert two.metrics["e_q_deg"]["mean"] == pytest.approx(math.degrees(0.01))
    with pytest.raises(EmptyInput):
        aggregate([], "s")


def test_aggregate_skips_failed_pose():
    rep = aggregate([_frame(100.0, e_t=0.2), _frame(0.0, failed=True, i=1)], "s")
    assert rep.pose_failures == 1
    assert rep.metrics["e_t"]["mean"] == 0.2
    assert rep.metrics["pck@10"]["mean"] == 50.0


def test_filtering_defaults_and_rows():
    assert FILTER_THRESHOLDS == (12.5, 25.0, 50.0, 90.0)
    rows = filtering_table([_frame(100.0, i=i) for i in range(5)])
    assert [r["setup"] for r in rows] == ["No filtering", "PCK>12.5", "PCK>25", "PCK>50", "PCK>90"]
    first = {k: v for k, v in rows[0].items() if k not in ("setup", "threshold")}
    for r in rows:
        assert {k: v for k, v in r.items() if k not in ("setup", "threshold")} == first
        assert r["data_percent"] == 100.0


def test_filtering_subsets():
    frames = [_frame(10.0, e_t=1.0, i=0), _frame(30.0, e_t=0.5, i=1), _frame(60.0, e_t=0.2, i=2),
              _frame(95.0, e_t=0.1, i=3), _frame(5.0, failed=True, i=4)]
    rows = filtering_table(frames)
    assert [r["data_percent"] for r in rows] == [100.0, 60.0, 60.0, 40.0, 20.0]
    assert rows[0]["pose_failures"] == 1 and rows[1]["pose_failures"] == 0
    assert rows[2]["e_t"] == pytest.approx(np.mean([0.5, 0.2, 0.1]))
    assert rows[4]["e_t"] == 0.1
    assert rows[4]["e_q_deg"] == pytest.approx(math.degrees(0.01))
    empty = filtering_table([_frame(10.0)], (50.0,))[1]
    assert empty["data_percent"] == 0.0 and empty["e_p"] is None and empty["pck10"] is None
    with pytest.raises(ValueError):
        filtering_table(frames, (100.0,))


@given(st.lists(st.floats(0, 100), min_size=1, max_size=30), st.lists(st.floats(0, 99.9), min_size=1, max_size=6))
def test_filtering_data_percent_non_increasing(pcks, thresholds):
    frames = [_frame(p, i=i) for i, p in enumerate(pcks)]
    rows = filtering_table(frames, sorted(thresholds))
    pct = [r["data_percent"] for r in rows]
    assert all(b <= a for a, b in zip(pct, pct[1:]))
