"""Per-frame point-cloud preprocessing and TSDF integration.

``preprocess`` turns a sensor-frame cloud into world-frame points with
per-point voxel keys, a validity mask, the set of blocks the frame's rays
will cross, and the free-space seed voxels (all read against the map
state *before* this frame is fused — detection consumes exactly that
snapshot). ``integrate`` then fuses every valid ray into the map.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .geometry import Pose
from .voxel_map import VoxelMap


@dataclass
class Frame:
    """One sensor sweep: points in the sensor frame plus the sensor pose."""

    index: int
    points: np.ndarray  # (N, 3) sensor-frame coordinates
    pose: Pose

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise ValueError(f"points must be (N, 3), got {self.points.shape}")


@dataclass
class IndexedCloud:
    """Preprocessed frame: everything downstream stages need, precomputed.

    ``unique_voxels`` holds the sorted packed keys of all voxels that
    contain at least one valid point; ``point_to_unique`` maps each point
    into that array (-1 for invalid points). ``seed_mask`` marks which of
    the unique voxels carried the free flag when the frame arrived.
    """

    frame_index: int
    sensor_origin: np.ndarray  # (3,)
    points_world: np.ndarray  # (N, 3)
    valid: np.ndarray  # (N,) bool
    voxel_keys: np.ndarray  # (N,) int64 packed global voxel, -1 where invalid
    unique_voxels: np.ndarray  # (U,) int64, sorted
    point_to_unique: np.ndarray  # (N,) int64, -1 where invalid
    touched_block_keys: np.ndarray  # (M,) int64 packed block keys, ray order
    seed_mask: np.ndarray  # (U,) uint8

    @property
    def seed_voxels(self) -> np.ndarray:
        """Packed keys of voxels that were flagged free and hold a point."""
        return self.unique_voxels[self.seed_mask.astype(bool)]

    @property
    def touched_blocks(self) -> np.ndarray:
        """(M, 3) block coordinates crossed by this frame's rays."""
        return _kernels.unpack_keys(self.touched_block_keys)

    @property
    def valid_count(self) -> int:
        return int(self.valid.sum())


def preprocess(vmap: VoxelMap, frame: Frame) -> IndexedCloud:
    """Transform, index, and validate a frame against the current map.

    Points farther than the configured integration range (measured in the
    sensor frame) or non-finite are marked invalid and take no part in
    integration, occupancy, or labeling. The returned block coverage is
    computed with the same block walk the integrator uses, so it equals
    the set of blocks integration will write.
    """
    frame.pose.validate()
    cfg = vmap.config
    pts = frame.points
    n = pts.shape[0]

    finite = np.isfinite(pts).all(axis=1)
    ranges = np.full(n, np.inf)
    np.sqrt((pts * pts).sum(axis=1), out=ranges, where=finite)
    valid = finite & (ranges <= cfg.max_integration_range) & (ranges > 0.0)

    points_world = np.where(finite[:, None], pts, 0.0) @ frame.pose.rotation.T
    points_world += frame.pose.translation
    # Restore non-finite rows so nothing downstream mistakes them for data.
    if not finite.all():
        points_world[~finite] = np.nan

    voxel_keys = np.full(n, -1, dtype=np.int64)
    point_to_unique = np.full(n, -1, dtype=np.int64)
    if valid.any():
        vox = vmap.voxel_of_points(points_world[valid])
        keys_valid = _kernels.pack_keys(vox)
        unique_voxels, inverse = np.unique(keys_valid, return_inverse=True)
        voxel_keys[valid] = keys_valid
        point_to_unique[valid] = inverse
    else:
        unique_voxels = np.empty(0, dtype=np.int64)

    seed_mask = _kernels.free_lookup(
        unique_voxels, vmap.slot_of, vmap.free, np.int64(vmap.block_side)
    )

    block_set = _kernels.make_key_set()
    _kernels.touched_blocks(
        frame.pose.translation,
        points_world,
        valid.astype(np.uint8),
        cfg.voxel_size,
        np.int64(vmap.block_side),
        cfg.truncation_distance,
        block_set,
    )
    touched_block_keys = np.fromiter(block_set.keys(), dtype=np.int64, count=len(block_set))

    return IndexedCloud(
        frame_index=frame.index,
        sensor_origin=frame.pose.translation.copy(),
        points_world=points_world,
        valid=valid,
        voxel_keys=voxel_keys,
        unique_voxels=unique_voxels,
        point_to_unique=point_to_unique,
        touched_block_keys=touched_block_keys,
        seed_mask=seed_mask,
    )


def integrate(vmap: VoxelMap, cloud: IndexedCloud) -> int:
    """Fuse one preprocessed frame into the map. Returns #blocks allocated.

    Allocation of the frame's block coverage happens serially up front;
    the fusion kernel then walks rays in point-index order, so repeated
    runs produce bit-identical maps. Weights only ever grow here — the
    detector's weight reset is the sole exception, applied between
    frames.
    """
    added = vmap.allocate_blocks(cloud.touched_block_keys)
    misses = _kernels.integrate_rays(
        cloud.sensor_origin,
        cloud.points_world,
        cloud.valid.astype(np.uint8),
        vmap.config.voxel_size,
        np.int64(vmap.block_side),
        vmap.config.truncation_distance,
        vmap.config.measurement_weight,
        vmap.slot_of,
        vmap.distance,
        vmap.weight,
        vmap.touched_stamp,
        np.int64(cloud.frame_index),
    )
    if misses:
        raise RuntimeError(
            f"integration crossed {misses} unallocated block(s); "
            "block coverage from preprocess is out of sync"
        )
    return added
