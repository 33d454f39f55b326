"""Per-point moving-object detection against the free-space map.

Runs *before* the frame is fused, against the flags the previous frame
left behind: points whose voxel sits in — or, with the spatial margin
enabled, next to — high-confidence free space are candidates; candidate
voxels are clustered, small clusters are discarded as noise, and the
points of the surviving clusters are labeled dynamic. The surviving
voxels also get their fusion weight zeroed so the next integration
overwrites whatever the moving object smeared into the map.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .integrator import IndexedCloud
from .voxel_map import MapConfig, VoxelMap, neighbor_offsets, packed_neighbor_offsets


@dataclass
class DetectorParams:
    """Effective detection parameters (ablation toggles folded in)."""

    connectivity: int = 26
    min_cluster_size: int = 20
    use_margin: bool = True

    @classmethod
    def from_config(
        cls,
        config: MapConfig,
        use_margin: bool = True,
        use_cluster_filter: bool = True,
    ) -> "DetectorParams":
        return cls(
            connectivity=config.connectivity,
            min_cluster_size=config.min_cluster_size if use_cluster_filter else 1,
            use_margin=use_margin,
        )


@dataclass
class Cluster:
    """One surviving dynamic cluster: its voxels and its point indices."""

    voxel_keys: np.ndarray  # (V,) packed, ascending
    point_indices: np.ndarray  # (P,) ascending

    @property
    def size(self) -> int:
        return int(self.voxel_keys.size)

    @property
    def voxels(self) -> np.ndarray:
        return _kernels.unpack_keys(self.voxel_keys)


@dataclass
class DetectionResult:
    """Everything the detector decided for one frame."""

    frame_index: int
    labels: np.ndarray  # (N,) bool, aligned with the frame's points
    clusters: list[Cluster] = field(default_factory=list)
    seed_voxels: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    candidate_voxels: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    @property
    def dynamic_voxels(self) -> np.ndarray:
        """Union of the surviving clusters' voxels (packed keys)."""
        if not self.clusters:
            return np.empty(0, dtype=np.int64)
        return np.concatenate([c.voxel_keys for c in self.clusters])

    @property
    def dynamic_count(self) -> int:
        return int(self.labels.sum())


def collect_dynamic_voxels(
    vmap: VoxelMap, cloud: IndexedCloud, params: DetectorParams
) -> np.ndarray:
    """Packed keys (ascending) of point-voxels touching free space.

    With the margin enabled the neighborhood is checked too — the
    inverted counterpart of the margin that held the free flags one
    voxel away from surfaces in the first place.
    """
    unique = cloud.unique_voxels
    if unique.size == 0:
        return unique
    side = np.int64(vmap.block_side)
    if params.use_margin:
        offsets = neighbor_offsets(params.connectivity)
        mask = _kernels.free_in_neighborhood(unique, vmap.slot_of, vmap.free, side, offsets)
    else:
        mask = _kernels.free_lookup(unique, vmap.slot_of, vmap.free, side)
    return unique[mask.astype(bool)]


def cluster_voxels(
    voxel_keys: np.ndarray, connectivity: int, min_cluster_size: int
) -> tuple[np.ndarray, int]:
    """Connected components with a minimum-size filter.

    Args:
        voxel_keys: ascending, duplicate-free packed voxel keys.
        connectivity: 6 or 26.
        min_cluster_size: components smaller than this are dropped.

    Returns:
        ``(labels, kept)`` where ``labels[i]`` is the surviving cluster id
        of ``voxel_keys[i]`` or -1, and ids 0..kept-1 are ordered by each
        cluster's lexicographically smallest voxel.
    """
    keys = np.asarray(voxel_keys, dtype=np.int64)
    if keys.size == 0:
        return np.empty(0, dtype=np.int32), 0
    comp, n_comp = _kernels.connected_components(keys, packed_neighbor_offsets(connectivity))
    sizes = np.bincount(comp, minlength=n_comp)
    keep = sizes >= min_cluster_size
    new_ids = np.where(keep, np.cumsum(keep) - 1, -1).astype(np.int32)
    return new_ids[comp], int(keep.sum())


def detect(
    vmap: VoxelMap, cloud: IndexedCloud, params: DetectorParams
) -> DetectionResult:
    """Label every point of the frame as moving or static."""
    n_points = cloud.valid.shape[0]
    candidates = collect_dynamic_voxels(vmap, cloud, params)
    labels = np.zeros(n_points, dtype=bool)
    if candidates.size == 0:
        return DetectionResult(
            frame_index=cloud.frame_index,
            labels=labels,
            seed_voxels=cloud.seed_voxels,
            candidate_voxels=candidates,
        )

    comp, n_kept = cluster_voxels(candidates, params.connectivity, params.min_cluster_size)

    # Cluster id per unique point-voxel (-1: not a candidate or filtered).
    cluster_of_unique = np.full(cloud.unique_voxels.size, -1, dtype=np.int32)
    cand_pos = np.searchsorted(cloud.unique_voxels, candidates)
    cluster_of_unique[cand_pos] = comp

    point_cluster = np.full(n_points, -1, dtype=np.int32)
    has_voxel = cloud.point_to_unique >= 0
    point_cluster[has_voxel] = cluster_of_unique[cloud.point_to_unique[has_voxel]]
    labels = point_cluster >= 0

    clusters = []
    for cid in range(n_kept):
        clusters.append(
            Cluster(
                voxel_keys=candidates[comp == cid],
                point_indices=np.flatnonzero(point_cluster == cid),
            )
        )

    return DetectionResult(
        frame_index=cloud.frame_index,
        labels=labels,
        clusters=clusters,
        seed_voxels=cloud.seed_voxels,
        candidate_voxels=candidates,
    )


def reset_dynamic_weights(vmap: VoxelMap, dynamic_voxel_keys: np.ndarray) -> None:
    """Zero the fusion weight of detected-dynamic voxels.

    Takes effect at the next integration: fusing from weight 0 makes the
    next measurement overwrite the stored distance outright. Voxels that
    were never allocated are skipped.
    """
    if dynamic_voxel_keys.size:
        _kernels.zero_weights(
            np.asarray(dynamic_voxel_keys, dtype=np.int64),
            vmap.slot_of,
            vmap.weight,
            np.int64(vmap.block_side),
        )
