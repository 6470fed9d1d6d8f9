"""Track keypoints with pyramidal LK through a rendered sequence, then solve poses.

Run:  python demos/03_tracking_and_pnp.py
"""

import numpy as np

from motionpose.dataset import SequenceDataset
from motionpose.geometry import geodesic_angle
from motionpose.pnp import correspondences_from_arrays, solve_ransac
from motionpose.predictors import track_sequence
from motionpose.simulation import RenderConfig, TrajectoryConfig, generate_dataset

ds = SequenceDataset.from_synthetic(generate_dataset(1, trajectory=TrajectoryConfig(frame_count=25),
                                                     render=RenderConfig(), seed=1))
seq = ds.sequences[0]

# frame 0 is initialised from ground truth, everything after comes from flow alone
preds = track_sequence(seq)
for t in (1, 5, 10, 15, 20, 24):
    err = np.linalg.norm(preds[t].keypoints - seq.records[t].keypoints_2d, axis=1)
    print(f"frame {t:2d}: mean drift {np.nanmean(err):.3f} px, max {np.nanmax(err):.3f} px, "
          f"tracked {int(preds[t].detected.sum())}/8")

print()
for t in (5, 15, 24):
    p = preds[t]
    sol = solve_ransac(correspondences_from_arrays(ds.model.points[p.detected], p.keypoints[p.detected]), ds.camera)
    gt = seq.records[t].pose
    print(f"frame {t:2d}: rotation error {np.degrees(geodesic_angle(sol.pose.rotation, gt.rotation)):.3f} deg, "
          f"translation error {np.linalg.norm(sol.pose.t - gt.t) * 100:.1f} cm, "
          f"rms reprojection {sol.rms_reprojection_error:.3f} px")

# two keypoints shoved 40 px away: RANSAC flags them and the pose barely moves
t = 10
kp = seq.records[t].keypoints_2d.copy()
kp[[2, 6]] += 40.0
sol = solve_ransac(correspondences_from_arrays(ds.model.points, kp), ds.camera)
print(f"\nwith 2 gross outliers: inliers {sol.inlier_mask}, "
      f"rotation error {np.degrees(geodesic_angle(sol.pose.rotation, seq.records[t].pose.rotation)):.2e} deg")
