"""voxmod: moving-object detection in sequential LiDAR point clouds.

An incremental truncated-signed-distance voxel map tracks, per voxel,
how recently and for how long it has been occupied; voxels that stay
idle long enough (together with their neighborhood) are flagged as
high-confidence free space. Points of a new scan that land in flagged
voxels seed dynamic clusters, which are filtered by size and mapped
back to per-point static/dynamic labels in real time.
"""

from .detector import (
    Cluster,
    DetectionResult,
    DetectorParams,
    cluster_voxels,
    collect_dynamic_voxels,
    detect,
    reset_dynamic_weights,
)
from .evaluation import (
    FrameMetrics,
    ScalingFit,
    StageTimings,
    aggregate,
    fit_scaling,
    fit_timing_scaling,
    score_frame,
    summarize_timings,
)
from .freespace import (
    FreespaceParams,
    apply_drift_reset,
    run_frame_update,
    update_duration,
    update_free_flags,
    update_occupancy,
)
from .geometry import Pose, matrix_to_quaternion, quaternion_to_matrix
from .integrator import Frame, IndexedCloud, integrate, preprocess
from .pipeline import DetectionPipeline, FrameResult, Toggles
from .voxel_map import (
    NEVER,
    MapConfig,
    VoxelMap,
    VoxelState,
    compute_reset_duration,
    fuse_measurement,
    neighbor_offsets,
    neighbors,
)

__version__ = "0.1.0"

__all__ = [
    "Cluster",
    "DetectionPipeline",
    "DetectionResult",
    "DetectorParams",
    "Frame",
    "FrameMetrics",
    "FrameResult",
    "FreespaceParams",
    "IndexedCloud",
    "MapConfig",
    "NEVER",
    "Pose",
    "ScalingFit",
    "StageTimings",
    "Toggles",
    "VoxelMap",
    "VoxelState",
    "aggregate",
    "apply_drift_reset",
    "cluster_voxels",
    "collect_dynamic_voxels",
    "compute_reset_duration",
    "detect",
    "fit_scaling",
    "fit_timing_scaling",
    "fuse_measurement",
    "integrate",
    "matrix_to_quaternion",
    "neighbor_offsets",
    "neighbors",
    "preprocess",
    "quaternion_to_matrix",
    "reset_dynamic_weights",
    "run_frame_update",
    "score_frame",
    "summarize_timings",
    "update_duration",
    "update_free_flags",
    "update_occupancy",
    "__version__",
]
