"""High-confidence free-space estimation over the voxel map.

Four per-frame passes, applied after integration in this fixed order:

1. ``update_occupancy`` — stamp the current frame into ``last_occupied``
   wherever the fused distance sits below the occupancy distance (TSDF
   cue) or a valid point fell into the voxel (point cue). Evaluated over
   this frame's touched blocks.
2. ``update_duration`` — advance or reset the consecutive-occupancy run,
   allowing gaps up to ``sparsity_frames``.
3. ``apply_drift_reset`` — clear free flags (and their neighborhood)
   wherever occupancy has persisted longer than ``reset_duration``
   frames, which under pose drift marks a surface creeping through space.
4. ``update_free_flags`` — raise the sticky free flag where a voxel and
   its whole neighborhood have been observed and idle for more than
   ``temporal_window`` frames.

Passes 2-4 run over the frame's touched blocks plus their face-adjacent
allocated blocks; state elsewhere stays frozen, which is safe because
detection only ever queries voxels holding current points and their
immediate neighbors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .voxel_map import MapConfig, VoxelMap, neighbor_offsets

_FACE_OFFSETS = neighbor_offsets(6)


@dataclass
class FreespaceParams:
    """Effective free-space parameters (ablation toggles already folded in)."""

    occupancy_distance: float
    sparsity_frames: int
    temporal_window: int
    reset_duration: float
    connectivity: int = 26
    use_tsdf_cue: bool = True
    use_occupancy_cue: bool = True
    use_margin: bool = True

    @classmethod
    def from_config(
        cls,
        config: MapConfig,
        use_tsdf_cue: bool = True,
        use_occupancy_cue: bool = True,
        use_margin: bool = True,
        use_temporal_window: bool = True,
        use_sparsity_compensation: bool = True,
    ) -> "FreespaceParams":
        return cls(
            occupancy_distance=config.occupancy_distance,
            sparsity_frames=config.sparsity_frames if use_sparsity_compensation else 0,
            temporal_window=config.temporal_window if use_temporal_window else 0,
            reset_duration=config.reset_duration,
            connectivity=config.connectivity,
            use_tsdf_cue=use_tsdf_cue,
            use_occupancy_cue=use_occupancy_cue,
            use_margin=use_margin,
        )


def touched_slots(vmap: VoxelMap, touched_block_keys: np.ndarray) -> np.ndarray:
    """Row slots of this frame's touched blocks (all must be allocated)."""
    slots = _kernels.slots_of_keys(touched_block_keys, vmap.slot_of)
    if (slots < 0).any():
        raise RuntimeError("touched block not allocated; integrate must run first")
    return slots


def frame_domain(vmap: VoxelMap, touched_block_keys: np.ndarray) -> np.ndarray:
    """Touched blocks plus allocated face-adjacent blocks, as sorted slots."""
    if touched_block_keys.size == 0:
        return np.empty(0, dtype=np.int64)
    t_slots = touched_slots(vmap, touched_block_keys)
    coords = vmap.block_coords[t_slots]
    adjacent = (coords[:, None, :] + _FACE_OFFSETS[None, :, :]).reshape(-1, 3)
    adj_slots = _kernels.slots_of_keys(_kernels.pack_keys(adjacent), vmap.slot_of)
    all_slots = np.concatenate([t_slots, adj_slots[adj_slots >= 0]])
    return np.unique(all_slots)


def update_occupancy(
    vmap: VoxelMap,
    t_slots: np.ndarray,
    hit_voxel_keys: np.ndarray,
    frame_no: int,
    params: FreespaceParams,
) -> None:
    """Stamp ``last_occupied`` for this frame over the touched blocks.

    ``hit_voxel_keys`` are the packed voxels containing valid current
    points (the point cue); the TSDF cue compares the stored distance —
    as fused this frame — against the occupancy distance.
    """
    if params.use_occupancy_cue and hit_voxel_keys.size:
        slots, offs = _kernels.resolve_keys(
            hit_voxel_keys, vmap.slot_of, np.int64(vmap.block_side)
        )
        present = slots >= 0
        _kernels.mark_point_hits(slots[present], offs[present], vmap.last_occupied, np.int64(frame_no))
    if params.use_tsdf_cue and t_slots.size:
        _kernels.occupancy_from_distance(
            t_slots, vmap.distance, vmap.last_occupied, params.occupancy_distance, np.int64(frame_no)
        )


def update_duration(
    vmap: VoxelMap, domain_slots: np.ndarray, frame_no: int, params: FreespaceParams
) -> None:
    """Advance consecutive-occupancy runs; a gap beyond the sparsity
    allowance resets the run to zero."""
    if domain_slots.size:
        _kernels.update_duration(
            domain_slots,
            vmap.last_occupied,
            vmap.occupied_duration,
            np.int64(frame_no),
            np.int64(params.sparsity_frames),
        )


def apply_drift_reset(
    vmap: VoxelMap, domain_slots: np.ndarray, params: FreespaceParams
) -> int:
    """Clear free flags where occupancy outlasted the reset duration.

    Returns the number of voxels that tripped the reset. Neighbor flags
    are cleared too while the spatial margin is enabled, mirroring the
    margin in the free-flag condition. Disabled when the reset duration
    is infinite.
    """
    if not domain_slots.size or math.isinf(params.reset_duration):
        return 0
    return int(
        _kernels.apply_reset(
            domain_slots,
            vmap.occupied_duration,
            vmap.free,
            np.int64(params.reset_duration),
            vmap.slot_of,
            vmap.block_coords,
            np.int64(vmap.block_side),
            neighbor_offsets(params.connectivity),
            params.use_margin,
        )
    )


def update_free_flags(
    vmap: VoxelMap, domain_slots: np.ndarray, frame_no: int, params: FreespaceParams
) -> None:
    """Raise the sticky free flag where observed idleness covers the margin.

    A voxel qualifies when it — and, with the margin enabled, every
    neighbor — has ``weight > 0`` and ``last_occupied < frame_no -
    temporal_window``. Never-occupied voxels satisfy the idleness test at
    any frame by construction of the NEVER sentinel. Flags only ever go
    up here; the drift reset is the only thing that lowers them.
    """
    if domain_slots.size:
        _kernels.update_free_flags(
            domain_slots,
            vmap.slot_of,
            vmap.block_coords,
            vmap.last_occupied,
            vmap.weight,
            vmap.free,
            np.int64(frame_no),
            np.int64(params.temporal_window),
            np.int64(vmap.block_side),
            params.use_margin,
            params.connectivity == 6,
        )


def run_frame_update(
    vmap: VoxelMap,
    touched_block_keys: np.ndarray,
    hit_voxel_keys: np.ndarray,
    frame_no: int,
    params: FreespaceParams,
) -> int:
    """All four passes in the required order. Returns the reset count."""
    t_slots = touched_slots(vmap, touched_block_keys) if touched_block_keys.size else np.empty(0, dtype=np.int64)
    domain = frame_domain(vmap, touched_block_keys)
    update_occupancy(vmap, t_slots, hit_voxel_keys, frame_no, params)
    update_duration(vmap, domain, frame_no, params)
    n_reset = apply_drift_reset(vmap, domain, params)
    update_free_flags(vmap, domain, frame_no, params)
    return n_reset
