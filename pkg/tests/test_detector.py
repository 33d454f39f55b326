"""Dynamic-voxel collection, clustering, per-point labels, weight feedback."""

import numpy as np
import pytest

from voxmod import _kernels
from voxmod.detector import (
    DetectorParams,
    cluster_voxels,
    collect_dynamic_voxels,
    detect,
    reset_dynamic_weights,
)
from voxmod.geometry import Pose
from voxmod.integrator import Frame, preprocess
from voxmod.voxel_map import MapConfig, VoxelMap, neighbor_offsets


def make_map():
    vmap = VoxelMap(MapConfig(voxel_size=0.2))
    vmap.allocate_blocks(_kernels.pack_keys(np.array([[0, 0, 0]], dtype=np.int64)))
    return vmap


def centers(vmap, voxels):
    return (np.asarray(voxels, dtype=np.float64) + 0.5) * vmap.config.voxel_size


def cloud_of(vmap, voxels, index=0):
    return preprocess(vmap, Frame(index=index, points=centers(vmap, voxels), pose=Pose()))


def params(**kw):
    defaults = dict(connectivity=26, min_cluster_size=1, use_margin=True)
    defaults.update(kw)
    return DetectorParams(**defaults)


def unpack_set(keys):
    return {tuple(v) for v in _kernels.unpack_keys(keys)}


# ------------------------------------------------------------ candidate pick

def test_point_in_free_voxel_is_candidate():
    vmap = make_map()
    vmap.set_voxel((5, 5, 5), free=True)
    cand = collect_dynamic_voxels(vmap, cloud_of(vmap, [(5, 5, 5)]), params())
    assert unpack_set(cand) == {(5, 5, 5)}


def test_point_next_to_free_voxel_is_candidate():
    vmap = make_map()
    vmap.set_voxel((5, 5, 5), free=True)
    cand = collect_dynamic_voxels(vmap, cloud_of(vmap, [(6, 5, 5)]), params())
    assert unpack_set(cand) == {(6, 5, 5)}


def test_point_far_from_free_space_is_not_candidate():
    vmap = make_map()
    vmap.set_voxel((5, 5, 5), free=True)
    cand = collect_dynamic_voxels(vmap, cloud_of(vmap, [(10, 10, 10)]), params())
    assert cand.size == 0


def test_margin_disabled_requires_own_voxel_free():
    vmap = make_map()
    vmap.set_voxel((5, 5, 5), free=True)
    p = params(use_margin=False)
    assert collect_dynamic_voxels(vmap, cloud_of(vmap, [(6, 5, 5)]), p).size == 0
    got = collect_dynamic_voxels(vmap, cloud_of(vmap, [(5, 5, 5)]), p)
    assert unpack_set(got) == {(5, 5, 5)}


def test_unallocated_region_yields_no_candidates():
    vmap = make_map()
    cand = collect_dynamic_voxels(vmap, cloud_of(vmap, [(200, 200, 200)]), params())
    assert cand.size == 0


# ------------------------------------------------------------------ clusters

def group(origin, shape):
    ox, oy, oz = origin
    return [
        (ox + dx, oy + dy, oz + dz)
        for dx in range(shape[0])
        for dy in range(shape[1])
        for dz in range(shape[2])
    ]


def test_two_separated_groups_make_two_clusters():
    a = group((0, 0, 0), (2, 2, 1))
    b = group((6, 0, 0), (2, 2, 1))
    keys = np.sort(_kernels.pack_keys(np.array(a + b, dtype=np.int64)))
    labels, kept = cluster_voxels(keys, connectivity=26, min_cluster_size=4)
    assert kept == 2
    assert (labels >= 0).all()


def test_undersized_group_is_dropped():
    a = group((0, 0, 0), (3, 1, 1))  # 3 voxels
    keys = np.sort(_kernels.pack_keys(np.array(a, dtype=np.int64)))
    labels, kept = cluster_voxels(keys, connectivity=26, min_cluster_size=4)
    assert kept == 0
    assert (labels == -1).all()
    labels, kept = cluster_voxels(keys, connectivity=26, min_cluster_size=3)
    assert kept == 1


def test_diagonal_contact_joins_only_under_26():
    pair = np.array([[0, 0, 0], [1, 1, 1]], dtype=np.int64)
    keys = np.sort(_kernels.pack_keys(pair))
    _, kept26 = cluster_voxels(keys, connectivity=26, min_cluster_size=2)
    _, kept6 = cluster_voxels(keys, connectivity=6, min_cluster_size=2)
    assert kept26 == 1
    assert kept6 == 0


def test_cluster_ids_ordered_by_smallest_member():
    groups = [group((12, 0, 0), (2, 1, 1)), group((0, 5, 0), (2, 1, 1)), group((4, 9, 9), (2, 1, 1))]
    flat = np.array([v for g in groups for v in g], dtype=np.int64)
    keys = np.sort(_kernels.pack_keys(flat))
    labels, kept = cluster_voxels(keys, connectivity=26, min_cluster_size=1)
    assert kept == 3
    mins = []
    for cid in range(kept):
        members = _kernels.unpack_keys(keys[labels == cid])
        mins.append(min(map(tuple, members)))
    assert mins == sorted(mins)


def union_find_partition(voxels, connectivity):
    """All-pairs union-find reference clustering."""
    n = len(voxels)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(n):
        for j in range(i + 1, n):
            d = np.abs(voxels[i] - voxels[j])
            if connectivity == 26:
                adjacent = d.max() == 1
            else:
                adjacent = d.sum() == 1
            if adjacent:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[ri] = rj

    comps = {}
    for i in range(n):
        comps.setdefault(find(i), []).append(tuple(voxels[i]))
    return {frozenset(c) for c in comps.values()}


@pytest.mark.parametrize("connectivity", [6, 26])
def test_partition_matches_union_find_oracle(connectivity):
    rng = np.random.default_rng(500 + connectivity)
    voxels = np.unique(rng.integers(0, 30, size=(500, 3)), axis=0)
    keys = np.sort(_kernels.pack_keys(voxels.astype(np.int64)))
    labels, kept = cluster_voxels(keys, connectivity=connectivity, min_cluster_size=1)
    assert kept == labels.max() + 1

    got = {}
    decoded = _kernels.unpack_keys(keys)
    for lab, v in zip(labels, decoded):
        got.setdefault(int(lab), []).append(tuple(v))
    assert {frozenset(c) for c in got.values()} == union_find_partition(
        _kernels.unpack_keys(keys), connectivity
    )


def test_empty_input_clusters_to_nothing():
    labels, kept = cluster_voxels(np.empty(0, dtype=np.int64), 26, 1)
    assert labels.size == 0 and kept == 0


# -------------------------------------------------------------------- labels

def freed_slab(vmap, x0=4, x1=12):
    for x in range(x0, x1):
        for y in range(4, 12):
            for z in range(4, 12):
                vmap.set_voxel((x, y, z), free=True)


def test_mover_points_labeled_exactly():
    vmap = make_map()
    freed_slab(vmap)
    mover = group((6, 6, 6), (2, 2, 2))  # 8 voxels inside freed space
    static = [(1, 1, 1), (14, 14, 14)]  # voxels without free contact
    cloud = cloud_of(vmap, mover + static)
    result = detect(vmap, cloud, params(min_cluster_size=4))
    np.testing.assert_array_equal(result.labels, [True] * len(mover) + [False] * len(static))
    assert len(result.clusters) == 1
    assert result.clusters[0].size == 8
    assert unpack_set(result.dynamic_voxels) == set(mover)


def test_no_free_space_means_no_labels():
    vmap = make_map()
    cloud = cloud_of(vmap, group((6, 6, 6), (2, 2, 2)))
    result = detect(vmap, cloud, params())
    assert not result.labels.any()
    assert result.clusters == []
    assert result.dynamic_voxels.size == 0


def test_invalid_point_over_cluster_voxel_stays_static():
    vmap = make_map()
    freed_slab(vmap)
    mover = group((6, 6, 6), (2, 2, 2))
    pts = centers(vmap, mover)
    far = pts[0] * 1000.0  # same direction, far out of range
    cloud = preprocess(
        vmap, Frame(index=0, points=np.vstack([pts, far[None, :]]), pose=Pose())
    )
    result = detect(vmap, cloud, params(min_cluster_size=4))
    assert result.labels[:-1].all()
    assert not result.labels[-1]


def test_filtered_cluster_points_stay_static():
    vmap = make_map()
    freed_slab(vmap)
    mover = group((6, 6, 6), (2, 2, 2))
    cloud = cloud_of(vmap, mover)
    result = detect(vmap, cloud, params(min_cluster_size=9))
    assert not result.labels.any()
    assert result.candidate_voxels.size == 8  # candidates found, cluster dropped


def test_raising_cluster_floor_never_adds_labels():
    rng = np.random.default_rng(33)
    vmap = make_map()
    freed_slab(vmap)
    vox = rng.integers(3, 13, size=(60, 3))
    cloud = cloud_of(vmap, vox)
    prev = None
    for tau in (1, 2, 4, 8, 16):
        labels = detect(vmap, cloud, params(min_cluster_size=tau)).labels
        if prev is not None:
            assert not (labels & ~prev).any()
        prev = labels


def test_detect_is_deterministic():
    rng = np.random.default_rng(44)
    vmap = make_map()
    freed_slab(vmap)
    vox = rng.integers(3, 13, size=(200, 3))
    cloud = cloud_of(vmap, vox)
    a = detect(vmap, cloud, params(min_cluster_size=3))
    b = detect(vmap, cloud, params(min_cluster_size=3))
    np.testing.assert_array_equal(a.labels, b.labels)
    assert len(a.clusters) == len(b.clusters)
    for ca, cb in zip(a.clusters, b.clusters):
        np.testing.assert_array_equal(ca.voxel_keys, cb.voxel_keys)
        np.testing.assert_array_equal(ca.point_indices, cb.point_indices)


def test_seed_voxels_reported():
    vmap = make_map()
    vmap.set_voxel((5, 5, 5), free=True)
    cloud = cloud_of(vmap, [(5, 5, 5), (9, 9, 9)])
    result = detect(vmap, cloud, params())
    assert unpack_set(result.seed_voxels) == {(5, 5, 5)}


# ----------------------------------------------------------- weight feedback

def test_reset_then_remeasure_overwrites_distance():
    vmap = make_map()
    vmap.set_voxel((5, 5, 5), distance=0.1, weight=9.0)
    reset_dynamic_weights(vmap, _kernels.pack_keys(np.array([[5, 5, 5]], dtype=np.int64)))
    assert vmap.get_voxel((5, 5, 5)).weight == 0.0
    st = vmap.fuse_into_voxel((5, 5, 5), 0.4, 1.0)
    assert st.distance == pytest.approx(0.4)
    assert st.weight == 1.0


def test_unreset_voxel_keeps_averaging():
    vmap = make_map()
    vmap.set_voxel((5, 5, 5), distance=0.1, weight=9.0)
    st = vmap.fuse_into_voxel((5, 5, 5), 0.4, 1.0)
    assert st.distance == pytest.approx(0.13)
    assert st.weight == 10.0


def test_reset_skips_unallocated_voxels():
    vmap = make_map()
    keys = _kernels.pack_keys(np.array([[500, 500, 500]], dtype=np.int64))
    reset_dynamic_weights(vmap, keys)  # must not raise or allocate
    assert vmap.block_count == 1


def test_reset_leaves_other_fields_alone():
    vmap = make_map()
    vmap.set_voxel((5, 5, 5), distance=0.1, weight=9.0, last_occupied=3, free=True)
    reset_dynamic_weights(vmap, _kernels.pack_keys(np.array([[5, 5, 5]], dtype=np.int64)))
    st = vmap.get_voxel((5, 5, 5))
    assert st.weight == 0.0
    assert st.distance == pytest.approx(0.1)
    assert st.last_occupied == 3
    assert st.free is True
