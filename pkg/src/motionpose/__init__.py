"""Motion-aware monocular spacecraft pose estimation toolkit (non-learned parts).

Synthetic sequences, motion-aware keypoint heatmaps, Lucas-Kanade keypoint
tracking, RANSAC PnP and the PCK / pose-error evaluation protocol.
"""

from .errors import *  # noqa: F401,F403
from .geometry import CameraIntrinsics, Pose, Quaternion, geodesic_angle, project, project_points, quat_to_matrix
from .simulation import (
    FrameRecord,
    RenderConfig,
    SpacecraftModel,
    TrajectoryConfig,
    export_dataset,
    generate_dataset,
    generate_trajectory,
    project_sequence,
    render_frame,
)
from .heatmaps import (
    Heatmap,
    MotionEncodingParams,
    decode,
    encode_circular,
    encode_motion_aware,
    fuse,
    read_heatmap_file,
    to_heatmap_coords,
    to_image_coords,
    write_heatmap_file,
)
from .flow import FlowContext, FlowParams, FlowResult, estimate_displacements, sample_displacement
from .pnp import Correspondence, PnpSolution, RansacParams, refine_lm, solve_dlt, solve_ransac
from .metrics import FrameEvaluation, SequenceReport, aggregate, filtering_table, pck, pose_errors
from .predictors import (
    OracleNoiseConfig,
    Prediction,
    flow_propagate_predict,
    import_heatmaps_predict,
    oracle_predict,
    track_sequence,
)
from .dataset import Sequence, SequenceDataset, load_dataset, sample_triplets
from .evaluation import ExperimentConfig, RunReport, run_evaluation

__version__ = "0.1.0"
