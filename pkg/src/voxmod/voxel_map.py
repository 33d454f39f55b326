"""Spatially-hashed voxel map with per-voxel temporal state.

The map is a hash of fixed-size blocks. Each block stores a dense cube of
voxels in x-fastest linear order; each voxel carries five fields:

* ``distance`` — truncated signed distance to the nearest observed surface,
* ``weight`` — accumulated fusion weight (0 means never observed),
* ``last_occupied`` — frame index the voxel was last considered occupied
  (``NEVER`` until the first time),
* ``occupied_duration`` — length of the current consecutive-occupancy run,
* ``free`` — sticky high-confidence free-space flag.

Blocks live in flat ``(capacity, block_voxels)`` arrays so the numba
kernels can chew on them directly; the Python-facing accessors below are
conveniences for tests and small-scale use, not the hot path.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from ._kernels import KEY_LIMIT, pack_keys, unpack_keys

#: Sentinel for "this voxel has never been occupied". Chosen very negative
#: so that ``last_occupied < t - temporal_window`` holds at any frame t >= 0.
NEVER = -(1 << 30)

_CONNECTIVITIES = (6, 26)


def neighbor_offsets(connectivity: int) -> np.ndarray:
    """The (K, 3) int64 offsets of the 6- or 26-neighborhood (no center)."""
    if connectivity == 6:
        return np.array(
            [[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]],
            dtype=np.int64,
        )
    if connectivity == 26:
        offs = [
            (dx, dy, dz)
            for dx, dy, dz in itertools.product((-1, 0, 1), repeat=3)
            if (dx, dy, dz) != (0, 0, 0)
        ]
        return np.array(offs, dtype=np.int64)
    raise ValueError(f"connectivity must be one of {_CONNECTIVITIES}, got {connectivity}")


def neighbors(voxel, connectivity: int = 26) -> np.ndarray:
    """Global coordinates of the neighbors of ``voxel`` (never includes it)."""
    v = np.asarray(voxel, dtype=np.int64)
    return v + neighbor_offsets(connectivity)


def packed_neighbor_offsets(connectivity: int) -> np.ndarray:
    """Neighbor offsets as packed-key deltas (valid away from coordinate limits)."""
    offs = neighbor_offsets(connectivity)
    return (offs[:, 0] << 42) + (offs[:, 1] << 21) + offs[:, 2]


@dataclass
class MapConfig:
    """Geometry and temporal parameters of the voxel map.

    ``truncation_distance`` and ``occupancy_distance`` default to 2x and
    1.5x the voxel size when left unset. ``reset_duration`` is in frames;
    ``inf`` disables the drift reset entirely.
    """

    voxel_size: float = 0.2
    block_voxels: int = 4096
    truncation_distance: float | None = None
    occupancy_distance: float | None = None
    sparsity_frames: int = 2
    temporal_window: int = 5
    reset_duration: float = math.inf
    min_cluster_size: int = 20
    max_integration_range: float = 20.0
    frame_rate: float = 10.0
    measurement_weight: float = 1.0
    connectivity: int = 26

    def __post_init__(self):
        if self.truncation_distance is None:
            self.truncation_distance = 2.0 * self.voxel_size
        if self.occupancy_distance is None:
            self.occupancy_distance = 1.5 * self.voxel_size
        if not (self.voxel_size > 0 and np.isfinite(self.voxel_size)):
            raise ValueError("voxel_size must be positive and finite")
        side = round(self.block_voxels ** (1.0 / 3.0))
        if side <= 0 or side**3 != self.block_voxels:
            raise ValueError(f"block_voxels must be a positive perfect cube, got {self.block_voxels}")
        if self.truncation_distance <= 0:
            raise ValueError("truncation_distance must be positive")
        if self.occupancy_distance <= 0:
            raise ValueError("occupancy_distance must be positive")
        if self.truncation_distance <= self.occupancy_distance:
            # Stored distances clamp at the truncation bound, so an occupancy
            # threshold at or above it could never fire.
            raise ValueError(
                "truncation_distance must exceed occupancy_distance "
                f"(got {self.truncation_distance} <= {self.occupancy_distance})"
            )
        if self.sparsity_frames < 0:
            raise ValueError("sparsity_frames must be >= 0")
        if self.temporal_window < 1:
            raise ValueError("temporal_window must be >= 1")
        if not (self.reset_duration >= 1):
            raise ValueError("reset_duration must be >= 1 frame (inf to disable)")
        if self.min_cluster_size < 1:
            raise ValueError("min_cluster_size must be >= 1")
        if self.max_integration_range <= 0:
            raise ValueError("max_integration_range must be positive")
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")
        if self.measurement_weight <= 0:
            raise ValueError("measurement_weight must be positive")
        if self.connectivity not in _CONNECTIVITIES:
            raise ValueError(f"connectivity must be one of {_CONNECTIVITIES}")

    @property
    def block_side(self) -> int:
        return round(self.block_voxels ** (1.0 / 3.0))

    def with_overrides(self, **kwargs) -> "MapConfig":
        return replace(self, **kwargs)


def fuse_measurement(distance, weight, new_distance, new_weight, truncation):
    """One weighted-average fusion step, result clamped to the truncation band.

    Args:
        distance: current stored signed distance.
        weight: current accumulated weight (>= 0).
        new_distance: measured signed distance for this update.
        new_weight: weight of this measurement (> 0).
        truncation: clamp bound for the fused distance.

    Returns:
        ``(fused_distance, fused_weight)``.
    """
    if new_weight <= 0:
        raise ValueError("new_weight must be positive")
    fused_weight = weight + new_weight
    fused = (distance * weight + new_distance * new_weight) / fused_weight
    fused = min(max(fused, -truncation), truncation)
    return fused, fused_weight


@dataclass
class VoxelState:
    """Read-only snapshot of one voxel's five fields."""

    distance: float
    weight: float
    last_occupied: int
    occupied_duration: int
    free: bool


def compute_reset_duration(voxel_size: float, frame_rate: float, max_drift_rate: float) -> float:
    """Frames a voxel may stay continuously occupied before its flags reset.

    Computed as floor(voxel_size * frame_rate / max_drift_rate): the
    number of frames a surface moving at the drift bound needs to cross
    one voxel. A zero (or negative) drift bound disables the reset and
    returns ``inf``.
    """
    if max_drift_rate <= 0:
        return math.inf
    return float(math.floor(voxel_size * frame_rate / max_drift_rate))


class VoxelMap:
    """Block-hashed voxel grid holding the five per-voxel fields."""

    def __init__(self, config: MapConfig, initial_capacity: int = 64):
        self.config = config
        side = config.block_side
        nv = config.block_voxels
        cap = max(int(initial_capacity), 1)
        self._side = side
        self._nv = nv
        self.slot_of = _kernels.make_slot_dict()
        self.n_blocks = 0
        self.distance = np.zeros((cap, nv), dtype=np.float64)
        self.weight = np.zeros((cap, nv), dtype=np.float64)
        self.last_occupied = np.full((cap, nv), NEVER, dtype=np.int32)
        self.occupied_duration = np.zeros((cap, nv), dtype=np.int32)
        self.free = np.zeros((cap, nv), dtype=np.uint8)
        self.block_coords = np.zeros((cap, 3), dtype=np.int64)
        self.touched_stamp = np.full(cap, -1, dtype=np.int64)

    # -- addressing ---------------------------------------------------

    @property
    def block_side(self) -> int:
        return self._side

    def voxel_of_points(self, points) -> np.ndarray:
        """Global voxel coordinates containing each point (floor convention)."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        v = np.floor(pts / self.config.voxel_size).astype(np.int64)
        if np.any(np.abs(v) > KEY_LIMIT):
            raise ValueError("point coordinates exceed the addressable map range")
        return v

    def point_to_voxel(self, point):
        """Return ``(block_index, offset)`` as two int 3-tuples for one point.

        The voxel's world cube contains the point and lies inside the
        returned block's cube; boundary points go to the larger index.
        """
        v = self.voxel_of_points(point)[0]
        block = v // self._side
        offset = v - block * self._side
        return tuple(int(c) for c in block), tuple(int(c) for c in offset)

    def point_to_block(self, point):
        """The block whose cube contains the point (floor convention)."""
        return self.point_to_voxel(point)[0]

    def block_of_voxels(self, voxels) -> np.ndarray:
        v = np.atleast_2d(np.asarray(voxels, dtype=np.int64))
        return v // self._side

    def voxel_center(self, voxels) -> np.ndarray:
        v = np.asarray(voxels, dtype=np.float64)
        return (v + 0.5) * self.config.voxel_size

    def linear_offset(self, offset) -> int:
        ox, oy, oz = offset
        return int(ox + self._side * (oy + self._side * oz))

    # -- storage ------------------------------------------------------

    @property
    def capacity(self) -> int:
        return self.distance.shape[0]

    @property
    def block_count(self) -> int:
        return self.n_blocks

    @property
    def voxel_count(self) -> int:
        return self.n_blocks * self._nv

    def _grow(self, needed: int) -> None:
        cap = self.capacity
        new_cap = max(2 * cap, needed)
        extra = new_cap - cap

        def pad(arr, fill):
            shape = (extra,) + arr.shape[1:]
            return np.concatenate([arr, np.full(shape, fill, dtype=arr.dtype)])

        self.distance = pad(self.distance, 0.0)
        self.weight = pad(self.weight, 0.0)
        self.last_occupied = pad(self.last_occupied, NEVER)
        self.occupied_duration = pad(self.occupied_duration, 0)
        self.free = pad(self.free, 0)
        self.block_coords = pad(self.block_coords, 0)
        self.touched_stamp = pad(self.touched_stamp, -1)

    def allocate_blocks(self, block_keys: np.ndarray) -> int:
        """Insert any not-yet-present blocks (packed keys). Returns #new."""
        new_keys = [int(k) for k in block_keys if int(k) not in self.slot_of]
        if self.n_blocks + len(new_keys) > self.capacity:
            self._grow(self.n_blocks + len(new_keys))
        added = 0
        for k in new_keys:
            slot = self.n_blocks
            self.slot_of[k] = slot
            self.block_coords[slot] = unpack_keys(np.array([k], dtype=np.int64))[0]
            self.n_blocks += 1
            added += 1
        return added

    def allocated_blocks(self) -> np.ndarray:
        """(B, 3) coordinates of all allocated blocks, in allocation order."""
        return self.block_coords[: self.n_blocks].copy()

    def has_block(self, block_index) -> bool:
        key = pack_keys(np.asarray([block_index], dtype=np.int64))[0]
        return int(key) in self.slot_of

    def _locate(self, voxel):
        v = np.asarray(voxel, dtype=np.int64)
        block = v // self._side
        key = int(pack_keys(block[None, :])[0])
        if key not in self.slot_of:
            return -1, 0
        off = v - block * self._side
        return int(self.slot_of[key]), int(off[0] + self._side * (off[1] + self._side * off[2]))

    def get_voxel(self, voxel) -> VoxelState | None:
        """Snapshot of the voxel at global coordinates, or None if unallocated."""
        slot, off = self._locate(voxel)
        if slot < 0:
            return None
        return VoxelState(
            distance=float(self.distance[slot, off]),
            weight=float(self.weight[slot, off]),
            last_occupied=int(self.last_occupied[slot, off]),
            occupied_duration=int(self.occupied_duration[slot, off]),
            free=bool(self.free[slot, off]),
        )

    def set_voxel(self, voxel, **fields) -> None:
        """Write voxel fields directly (allocating the block); test support."""
        v = np.asarray(voxel, dtype=np.int64)
        block = v // self._side
        self.allocate_blocks(pack_keys(block[None, :]))
        slot, off = self._locate(voxel)
        for name, value in fields.items():
            getattr(self, name)[slot, off] = value

    def fuse_into_voxel(self, voxel, new_distance, new_weight) -> VoxelState:
        """Single-voxel fusion through the same rule the integrator applies."""
        v = np.asarray(voxel, dtype=np.int64)
        block = v // self._side
        self.allocate_blocks(pack_keys(block[None, :]))
        slot, off = self._locate(voxel)
        d, w = fuse_measurement(
            self.distance[slot, off],
            self.weight[slot, off],
            new_distance,
            new_weight,
            self.config.truncation_distance,
        )
        self.distance[slot, off] = d
        self.weight[slot, off] = w
        return self.get_voxel(voxel)
