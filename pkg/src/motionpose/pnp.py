"""Perspective-n-Point: DLT initialisation, LM refinement, RANSAC.

All poses returned here carry canonical quaternions (``w >= 0``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateConfiguration, InsufficientPoints, NoConsensus, NonPositiveDepth
from .geometry import DEPTH_EPSILON, CameraIntrinsics, Pose, Quaternion, project_points

MIN_SAMPLE = 6
CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class Correspondence:
    point3: tuple
    point2: tuple
    weight: float = 1.0

    def __post_init__(self):
        p3 = tuple(float(v) for v in self.point3)
        p2 = tuple(float(v) for v in self.point2)
        if len(p3) != 3 or len(p2) != 2 or not all(map(math.isfinite, p3 + p2)):
            raise ValueError("correspondence coordinates must be finite 3-D / 2-D points")
        if not self.weight >= 0:
            raise ValueError("weight must be non-negative")
        object.__setattr__(self, "point3", p3)
        object.__setattr__(self, "point2", p2)


def correspondences_from_arrays(points3, points2, weights=None) -> list[Correspondence]:
    points3 = np.asarray(points3, dtype=float)
    points2 = np.asarray(points2, dtype=float)
    if weights is None:
        weights = np.ones(len(points3))
    return [Correspondence(tuple(a), tuple(b), float(w)) for a, b, w in zip(points3, points2, weights)]


def _arrays(correspondences):
    X = np.array([c.point3 for c in correspondences], dtype=float).reshape(-1, 3)
    x = np.array([c.point2 for c in correspondences], dtype=float).reshape(-1, 2)
    w = np.array([c.weight for c in correspondences], dtype=float)
    return X, x, w


@dataclass(frozen=True)
class RansacParams:
    max_iterations: int = 200
    inlier_threshold: float = 4.0
    min_sample: int = MIN_SAMPLE
    confidence: float = 0.999
    seed: int = 0
    polish_iterations: int = 5  # LM steps on each minimal sample; 0 keeps raw DLT hypotheses

    def __post_init__(self):
        if self.max_iterations < 1 or not self.inlier_threshold > 0:
            raise ValueError("max_iterations must be >= 1 and inlier_threshold > 0")
        if self.min_sample != MIN_SAMPLE:
            raise ValueError(f"min_sample is fixed at {MIN_SAMPLE}")
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must lie in (0, 1)")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class PnpSolution:
    pose: Pose
    inlier_mask: tuple
    rms_reprojection_error: float
    converged: bool = True

    @property
    def inlier_count(self) -> int:
        return int(sum(self.inlier_mask))


class LMResult(NamedTuple):
    pose: Pose
    rms: float
    converged: bool
    iterations: int


def solve_dlt(correspondences, cam: CameraIntrinsics) -> Pose:
    """Linear pose from >= 6 correspondences, projected onto SO(3)."""
    if len(correspondences) < MIN_SAMPLE:
        raise InsufficientPoints(f"DLT needs at least {MIN_SAMPLE} correspondences, got {len(correspondences)}")
    X, x, _ = _arrays(correspondences)
    return _dlt(X, x, cam)


def _dlt(X: np.ndarray, x: np.ndarray, cam: CameraIntrinsics) -> Pose:
    n = len(X)
    # normalized camera coordinates, then Hartley-style conditioning of both sides
    xn = np.column_stack([(x[:, 0] - cam.cx) / cam.fx, (x[:, 1] - cam.cy) / cam.fy])
    c2 = xn.mean(axis=0)
    s2 = math.sqrt(2.0) / max(np.mean(np.linalg.norm(xn - c2, axis=1)), 1e-300)
    c3 = X.mean(axis=0)
    s3 = math.sqrt(3.0) / max(np.mean(np.linalg.norm(X - c3, axis=1)), 1e-300)
    T2inv = np.array([[1 / s2, 0, c2[0]], [0, 1 / s2, c2[1]], [0, 0, 1.0]])
    T3 = np.diag([s3, s3, s3, 1.0])
    T3[:3, 3] = -s3 * c3
    xh = (xn - c2) * s2
    Xh = np.column_stack([(X - c3) * s3, np.ones(n)])

    A = np.zeros((2 * n, 12))
    A[0::2, 0:4] = Xh
    A[0::2, 8:12] = -xh[:, [0]] * Xh
    A[1::2, 4:8] = Xh
    A[1::2, 8:12] = -xh[:, [1]] * Xh
    _, s, Vt = np.linalg.svd(A)
    if s[-2] <= 0 or s[0] / s[-2] > CONDITION_LIMIT:
        raise DegenerateConfiguration(f"DLT system is rank deficient (condition {s[0] / max(s[-2], 1e-300):.3g})")
    P = T2inv @ Vt[-1].reshape(3, 4) @ T3

    # sign: centroid in front of the camera
    if (P @ np.append(c3, 1.0))[2] < 0:
        P = -P
    U, S, Vt3 = np.linalg.svd(P[:, :3])
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt3))])
    R = U @ D @ Vt3
    t = P[:, 3] / S.mean()
    return Pose.from_rt(R, t)


def _residuals(pose: Pose, X, x, sw, cam) -> np.ndarray:
    return sw[:, None] * (project_points(pose, cam, X) - x)


def _jacobian(pose: Pose, X, sw, cam) -> np.ndarray:
    R = pose.R
    Xc = X @ R.T + pose.t
    z = Xc[:, 2]
    if np.any(z <= DEPTH_EPSILON):
        raise NonPositiveDepth("point behind camera while linearizing")
    n = len(X)
    dpi = np.zeros((n, 2, 3))
    dpi[:, 0, 0] = cam.fx / z
    dpi[:, 0, 2] = -cam.fx * Xc[:, 0] / z**2
    dpi[:, 1, 1] = cam.fy / z
    dpi[:, 1, 2] = -cam.fy * Xc[:, 1] / z**2
    S = np.zeros((n, 3, 3))
    S[:, 0, 1], S[:, 0, 2], S[:, 1, 2] = -X[:, 2], X[:, 1], -X[:, 0]
    S[:, 1, 0], S[:, 2, 0], S[:, 2, 1] = X[:, 2], -X[:, 1], X[:, 0]
    dXc = np.concatenate([-np.einsum("ij,njk->nik", R, S), np.broadcast_to(np.eye(3), (n, 3, 3))], axis=2)
    J = np.einsum("nij,njk->nik", dpi, dXc) * sw[:, None, None]
    return J.reshape(2 * n, 6)


def reprojection_residuals(pose: Pose, correspondences, cam: CameraIntrinsics) -> np.ndarray:
    """Weighted residuals ``sqrt(w) * (project(X) - x)``, shape (N, 2)."""
    X, x, w = _arrays(correspondences)
    return _residuals(pose, X, x, np.sqrt(w), cam)


def reprojection_jacobian(pose: Pose, correspondences, cam: CameraIntrinsics) -> np.ndarray:
    """d(residuals)/d(omega, tau) for ``R <- R exp([omega]x)``, ``T <- T + tau``; shape (2N, 6).

    Rows are ordered (u0, v0, u1, v1, ...).
    """
    X, _, w = _arrays(correspondences)
    return _jacobian(pose, X, np.sqrt(w), cam)


def apply_increment(pose: Pose, delta) -> Pose:
    delta = np.asarray(delta, dtype=float)
    return Pose(pose.rotation * Quaternion.from_rotvec(delta[:3]), tuple(pose.t + delta[3:]))


def _rms(res: np.ndarray, w: np.ndarray) -> float:
    wsum = float(w.sum())
    return math.sqrt(float(np.sum(res * res)) / wsum) if wsum > 0 else 0.0


def refine_lm(
    init: Pose,
    correspondences,
    cam: CameraIntrinsics,
    max_iterations: int = 50,
    gradient_tolerance: float = 1e-10,
    step_tolerance: float = 1e-12,
) -> LMResult:
    """Minimise the weighted squared reprojection error over a 6-D local chart.

    Marquardt-scaled damping; the damping factor halves on accepted steps and
    quadruples on rejected ones. Steps that push a point behind the camera
    are rejected. The returned pose is the best one seen.
    """
    X, x, w = _arrays(correspondences)
    return _lm(init, X, x, w, cam, max_iterations, gradient_tolerance, step_tolerance)


def _lm(init, X, x, w, cam, max_iterations=50, gradient_tolerance=1e-10, step_tolerance=1e-12) -> LMResult:
    sw = np.sqrt(w)
    pose = init
    res = _residuals(pose, X, x, sw, cam).ravel()
    cost = float(res @ res)
    lam = 1e-3
    converged = False
    it = 0
    while it < max_iterations:
        J = _jacobian(pose, X, sw, cam)
        g = J.T @ res
        if np.max(np.abs(g)) < gradient_tolerance:
            converged = True
            break
        it += 1
        JtJ = J.T @ J
        diag = np.diag(np.maximum(np.diag(JtJ), 1e-12))
        accepted = False
        while lam < 1e16:
            delta = -np.linalg.solve(JtJ + lam * diag, g)
            candidate = apply_increment(pose, delta)
            try:
                r_new = _residuals(candidate, X, x, sw, cam).ravel()
            except NonPositiveDepth:
                lam *= 4.0
                continue
            c_new = float(r_new @ r_new)
            if c_new <= cost:
                pose, res, cost = candidate, r_new, c_new
                lam = max(lam * 0.5, 1e-15)
                accepted = True
                break
            lam *= 4.0
        if not accepted:
            break
        if np.linalg.norm(delta) < step_tolerance:
            converged = True
            break
    return LMResult(pose.canonical(), _rms(res.reshape(-1, 2), w), converged, it)


def _errors(pose: Pose, X: np.ndarray, x: np.ndarray, cam: CameraIntrinsics) -> np.ndarray:
    try:
        return np.linalg.norm(project_points(pose, cam, X) - x, axis=1)
    except NonPositiveDepth:
        # score points individually so one bad depth does not discard the rest
        out = np.full(len(X), np.inf)
        for i in range(len(X)):
            try:
                out[i] = np.linalg.norm(project_points(pose, cam, X[i:i + 1])[0] - x[i])
            except NonPositiveDepth:
                pass
        return out


def _required_iterations(inlier_ratio: float, sample: int, confidence: float) -> float:
    p_good = inlier_ratio**sample
    if p_good >= 1.0:
        return 0.0
    if p_good <= 0.0:
        return math.inf
    return math.log(1.0 - confidence) / math.log(1.0 - p_good)


def _hypothesis(X, x, cam, polish: int, threshold: float) -> Pose:
    pose = _dlt(X, x, cam)
    # the linear fit is not reprojection-optimal; polish only when it misses its own sample
    if polish > 0 and not np.all(_errors(pose, X, x, cam) < threshold):
        try:
            pose = _lm(pose, X, x, np.ones(len(X)), cam, max_iterations=polish).pose
        except NonPositiveDepth:
            pass
    return pose


def solve_ransac(correspondences, cam: CameraIntrinsics, params: RansacParams = RansacParams()) -> PnpSolution:
    """RANSAC over 6-point DLT hypotheses, finished by LM on the consensus set.

    A minimal-sample DLT pose that does not fit its own sample within the
    inlier threshold gets ``polish_iterations`` LM steps before scoring. Samples are drawn from ``default_rng(seed)``;
    on equal inlier counts the earlier hypothesis wins. Sampling stops once
    the standard ``log(1 - p) / log(1 - w^6)`` bound is reached.
    """
    n = len(correspondences)
    if n < params.min_sample:
        raise InsufficientPoints(f"RANSAC needs at least {params.min_sample} correspondences, got {n}")
    X, x, w = _arrays(correspondences)
    rng = np.random.default_rng(params.seed)
    best_mask, best_count, best_pose = None, 0, None
    k = 0
    budget = float(params.max_iterations)
    while k < budget:
        idx = rng.choice(n, size=params.min_sample, replace=False)
        k += 1
        try:
            hyp = _hypothesis(X[idx], x[idx], cam, params.polish_iterations, params.inlier_threshold)
        except DegenerateConfiguration:
            continue
        mask = _errors(hyp, X, x, cam) < params.inlier_threshold
        count = int(mask.sum())
        if count > best_count:
            best_mask, best_count, best_pose = mask, count, hyp
            if count >= params.min_sample:
                budget = min(budget, _required_iterations(count / n, params.min_sample, params.confidence))
    if best_count < params.min_sample:
        raise NoConsensus(f"no hypothesis reached {params.min_sample} inliers under {params.inlier_threshold} px")

    mask = best_mask
    pose, converged = best_pose, True
    for _ in range(2):
        start = pose
        try:
            dlt = _dlt(X[mask], x[mask], cam)
            if np.sum(_errors(dlt, X[mask], x[mask], cam) ** 2) < np.sum(_errors(pose, X[mask], x[mask], cam) ** 2):
                start = dlt
        except DegenerateConfiguration:
            pass
        lm = _lm(start, X[mask], x[mask], w[mask], cam)
        pose, converged = lm.pose, lm.converged
        new_mask = _errors(pose, X, x, cam) < params.inlier_threshold
        if new_mask.sum() < params.min_sample or np.array_equal(new_mask, mask):
            break
        mask = new_mask
    rms = _rms(_residuals(pose, X[mask], x[mask], np.sqrt(w[mask]), cam), w[mask])
    return PnpSolution(pose.canonical(), tuple(bool(b) for b in mask), rms, converged)
