"""Frame-by-frame detection pipeline tying the map, free-space update,
and detector together.

Per-frame order:

1. preprocess the incoming cloud (transform, range gate, voxel keys)
2. detect moving points against the *current* free flags (i.e. the
   state left by the previous frame)
3. zero the weights of voxels flagged dynamic last frame, so this
   frame's measurements re-integrate them from scratch
4. allocate blocks along the rays and fuse the TSDF
5. run the free-space passes (occupancy, duration, drift reset, flags)

Detection deliberately runs before integration: the flags it consumes
were computed from frames 0..t-1, and the weight reset it schedules
lands at step 3 of frame t+1.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .detector import DetectionResult, DetectorParams, detect, reset_dynamic_weights
from .evaluation import StageTimings
from .freespace import FreespaceParams, run_frame_update
from .integrator import Frame, IndexedCloud, integrate, preprocess
from .voxel_map import MapConfig, VoxelMap


@dataclass
class Toggles:
    """Feature switches for ablation runs. Everything on by default."""

    use_occupancy_cue: bool = True
    use_tsdf_cue: bool = True
    use_temporal_window: bool = True
    use_spatial_margin: bool = True
    use_sparsity_compensation: bool = True
    use_cluster_filter: bool = True

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Toggles":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown toggle(s): {sorted(unknown)}")
        return cls(**data)

    def off(self, *names: str) -> "Toggles":
        """Copy with the named switches disabled."""
        known = {f.name for f in fields(self)}
        unknown = set(names) - known
        if unknown:
            raise ValueError(f"unknown toggle(s): {sorted(unknown)}")
        return replace(self, **{n: False for n in names})


@dataclass
class FrameResult:
    """Output of one pipeline step: labels plus bookkeeping."""

    detection: DetectionResult
    timings: StageTimings
    blocks_allocated: int
    voxels_reset: int
    weights_reset: int
    cloud: IndexedCloud


class DetectionPipeline:
    """Incremental map + detector over a sequence of posed clouds."""

    def __init__(self, config: MapConfig | None = None, toggles: Toggles | None = None,
                 threads: int = 0):
        self.config = config if config is not None else MapConfig()
        self.toggles = toggles if toggles is not None else Toggles()
        self.map = VoxelMap(self.config)
        t = self.toggles
        self.freespace_params = FreespaceParams.from_config(
            self.config,
            use_tsdf_cue=t.use_tsdf_cue,
            use_occupancy_cue=t.use_occupancy_cue,
            use_margin=t.use_spatial_margin,
            use_temporal_window=t.use_temporal_window,
            use_sparsity_compensation=t.use_sparsity_compensation,
        )
        # The spatial-margin toggle governs the free-flag neighborhood test
        # only.  Seed dilation on the detection side is part of the lookup
        # rule itself and stays on regardless.
        self.detector_params = DetectorParams.from_config(
            self.config,
            use_margin=True,
            use_cluster_filter=t.use_cluster_filter,
        )
        self._pending_reset = np.empty(0, dtype=np.int64)
        self._last_index: int | None = None
        self.frames_processed = 0
        if threads > 0:
            import numba

            # More threads than the machine offers is not an error, just a cap.
            numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))

    def process_frame(self, frame: Frame) -> FrameResult:
        if self._last_index is not None and frame.index <= self._last_index:
            raise ValueError(
                f"frame indices must increase (got {frame.index} "
                f"after {self._last_index})"
            )
        self._last_index = frame.index

        t0 = time.perf_counter()
        cloud = preprocess(self.map, frame)
        t1 = time.perf_counter()

        detection = detect(self.map, cloud, self.detector_params)
        t2 = time.perf_counter()

        weights_reset = int(self._pending_reset.size)
        if self._pending_reset.size:
            reset_dynamic_weights(self.map, self._pending_reset)
        self._pending_reset = detection.dynamic_voxels
        blocks_allocated = integrate(self.map, cloud)
        t3 = time.perf_counter()

        voxels_reset = self._run_freespace(cloud)
        t4 = time.perf_counter()

        self.frames_processed += 1
        timings = StageTimings(
            frame=frame.index,
            preprocess_ms=(t1 - t0) * 1e3,
            clustering_ms=(t2 - t1) * 1e3,
            integration_ms=(t3 - t2) * 1e3,
            freespace_ms=(t4 - t3) * 1e3,
            total_ms=(t4 - t0) * 1e3,
            n_points=frame.points.shape[0],
            n_valid_points=cloud.valid_count,
            n_seed_voxels=int(cloud.seed_mask.sum()),
            n_candidate_voxels=detection.candidate_voxels.size,
            n_touched_blocks=cloud.touched_block_keys.size,
            n_allocated_blocks=blocks_allocated,
        )
        return FrameResult(
            detection=detection,
            timings=timings,
            blocks_allocated=blocks_allocated,
            voxels_reset=voxels_reset,
            weights_reset=weights_reset,
            cloud=cloud,
        )

    def _run_freespace(self, cloud: IndexedCloud) -> int:
        hit_keys = cloud.voxel_keys[cloud.voxel_keys >= 0]
        return run_frame_update(
            self.map,
            cloud.touched_block_keys,
            hit_keys,
            cloud.frame_index,
            self.freespace_params,
        )

    def run(self, frames) -> list[FrameResult]:
        """Process an iterable of frames in order."""
        return [self.process_frame(f) for f in frames]
