"""Drives the incremental map and the dense reference over the same
randomized frame inputs, comparing temporal state exactly after every
frame. Shared by the freespace unit tests and the acceptance suite.
"""
import itertools

import numpy as np

import dense_oracle
from voxmod import _kernels
from voxmod.freespace import FreespaceParams, run_frame_update
from voxmod.voxel_map import MapConfig, VoxelMap


def gather_dense(vmap, nb):
    """Mirror the sparse map's temporal state over blocks [0,nb)^3."""
    side = vmap.block_side
    shape = tuple(n * side for n in nb)
    out = {
        "last_occupied": np.empty(shape, dtype=np.int64),
        "occupied_duration": np.empty(shape, dtype=np.int64),
        "free": np.empty(shape, dtype=bool),
        "weight": np.empty(shape, dtype=np.float64),
    }
    for bx, by, bz in itertools.product(*(range(n) for n in nb)):
        key = int(_kernels.pack_keys(np.array([[bx, by, bz]], dtype=np.int64))[0])
        slot = int(vmap.slot_of[key])
        sl = (
            slice(bx * side, (bx + 1) * side),
            slice(by * side, (by + 1) * side),
            slice(bz * side, (bz + 1) * side),
        )
        cube = (side, side, side)
        out["last_occupied"][sl] = vmap.last_occupied[slot].reshape(cube, order="F")
        out["occupied_duration"][sl] = vmap.occupied_duration[slot].reshape(cube, order="F")
        out["free"][sl] = vmap.free[slot].reshape(cube, order="F").astype(bool)
        out["weight"][sl] = vmap.weight[slot].reshape(cube, order="F")
    return out


def run_equivalence_scenario(
    seed,
    n_frames,
    *,
    nb=(2, 2, 2),
    active=20,
    occ_dist=0.3,
    sparsity=2,
    window=4,
    reset_duration=np.inf,
    connectivity=26,
    use_margin=True,
    writes_per_frame=300,
    hits_per_frame=100,
    p_touch=0.6,
):
    """Random scene over an ``active``^3 voxel box inside a ``nb``-block
    region; every frame the same distance/weight writes, touched-block
    set, and point hits feed both implementations, and last-occupied /
    duration / free-flag state must agree exactly everywhere.
    """
    rng = np.random.default_rng(seed)
    side = 16
    shape = tuple(n * side for n in nb)
    assert all(active <= s for s in shape)

    cfg = MapConfig(voxel_size=0.2, block_voxels=side**3, connectivity=connectivity)
    vmap = VoxelMap(cfg)
    blocks = np.array(
        list(itertools.product(*(range(n) for n in nb))), dtype=np.int64
    )
    block_keys = _kernels.pack_keys(blocks)
    vmap.allocate_blocks(block_keys)

    state = dense_oracle.make_state(shape)
    distance = np.zeros(shape)
    weight = np.zeros(shape)

    params = FreespaceParams(
        occupancy_distance=occ_dist,
        sparsity_frames=sparsity,
        temporal_window=window,
        reset_duration=reset_duration,
        connectivity=connectivity,
        use_margin=use_margin,
    )

    for t in range(n_frames):
        touched_flags = rng.random(nb) < p_touch
        touched_keys = _kernels.pack_keys(
            np.argwhere(touched_flags).astype(np.int64)
        )

        touched_vox = dense_oracle.block_mask(shape, side, touched_flags)
        box = np.zeros(shape, dtype=bool)
        box[:active, :active, :active] = True
        writable = np.argwhere(touched_vox & box)

        hit_keys = np.empty(0, dtype=np.int64)
        if writable.size:
            picks = writable[rng.integers(0, len(writable), writes_per_frame)]
            picks = np.unique(picks, axis=0)
            d_vals = rng.uniform(-0.4, 0.4, len(picks))
            w_vals = np.where(rng.random(len(picks)) < 0.25, 0.0, rng.uniform(0.1, 2.0, len(picks)))
            # identical writes to both representations
            distance[picks[:, 0], picks[:, 1], picks[:, 2]] = d_vals
            weight[picks[:, 0], picks[:, 1], picks[:, 2]] = w_vals
            keys = _kernels.pack_keys(picks.astype(np.int64))
            slots, offs = _kernels.resolve_keys(keys, vmap.slot_of, np.int64(side))
            assert (slots >= 0).all()
            vmap.distance[slots, offs] = d_vals
            vmap.weight[slots, offs] = w_vals

            hit_rows = writable[rng.integers(0, len(writable), hits_per_frame)]
            hit_rows = np.unique(hit_rows, axis=0)
            hit_keys = _kernels.pack_keys(hit_rows.astype(np.int64))

        hit_mask = np.zeros(shape, dtype=bool)
        if hit_keys.size:
            hv = _kernels.unpack_keys(hit_keys)
            hit_mask[hv[:, 0], hv[:, 1], hv[:, 2]] = True

        n_reset_inc = run_frame_update(vmap, touched_keys, hit_keys, t, params)
        n_reset_ref = dense_oracle.dense_frame_update(
            state,
            distance,
            weight,
            touched_flags,
            hit_mask,
            t,
            side=side,
            occ_dist=occ_dist,
            sparsity=sparsity,
            window=window,
            reset_duration=reset_duration,
            connectivity=connectivity,
            use_margin=use_margin,
        )

        got = gather_dense(vmap, nb)
        np.testing.assert_array_equal(got["weight"], weight, err_msg=f"frame {t}: weight")
        np.testing.assert_array_equal(
            got["last_occupied"], state["last_occupied"], err_msg=f"frame {t}: last_occupied"
        )
        np.testing.assert_array_equal(
            got["occupied_duration"],
            state["occupied_duration"],
            err_msg=f"frame {t}: occupied_duration",
        )
        np.testing.assert_array_equal(got["free"], state["free"], err_msg=f"frame {t}: free flags")
        assert n_reset_inc == n_reset_ref, f"frame {t}: reset counts differ"

    return vmap, state
