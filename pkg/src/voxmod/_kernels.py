"""Numba kernels for the hot per-frame loops.

Everything here operates on the flat block-table representation owned by
:class:`voxmod.voxel_map.VoxelMap`: per-field ``(capacity, block_voxels)``
arrays plus a typed dict mapping packed block coordinates to row slots.

Voxel and block coordinates are packed into a single int64 key (21 bits
per signed component) so hash lookups and neighbor arithmetic are plain
integer ops. Ray traversal walks the block grid first and the voxels
inside each block segment second; the block-coverage pass used for
allocation runs the identical outer walk, which is what guarantees that
the set of blocks reported as touched equals the set of blocks written.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit, prange, types
from numba.typed import Dict

KEY_BIAS = 1 << 20
KEY_LIMIT = (1 << 20) - 2  # |coordinate| must stay below this to pack safely
_SX = 42
_SY = 21
_MASK = (1 << 21) - 1


def make_slot_dict():
    """Fresh packed-block-key -> row-slot typed dict."""
    return Dict.empty(types.int64, types.int64)


def make_key_set():
    """Typed dict used as an insertion-ordered int64 set."""
    return Dict.empty(types.int64, types.int64)


@njit(cache=True, inline="always")
def pack_key(x, y, z):
    return ((x + KEY_BIAS) << _SX) | ((y + KEY_BIAS) << _SY) | (z + KEY_BIAS)


@njit(cache=True, inline="always")
def unpack_x(key):
    return (key >> _SX) - KEY_BIAS


@njit(cache=True, inline="always")
def unpack_y(key):
    return ((key >> _SY) & _MASK) - KEY_BIAS


@njit(cache=True, inline="always")
def unpack_z(key):
    return (key & _MASK) - KEY_BIAS


@njit(cache=True)
def pack_keys(coords):
    """Vectorised packing of an (N, 3) int64 coordinate array."""
    n = coords.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        out[i] = pack_key(coords[i, 0], coords[i, 1], coords[i, 2])
    return out


@njit(cache=True)
def unpack_keys(keys):
    n = keys.shape[0]
    out = np.empty((n, 3), dtype=np.int64)
    for i in range(n):
        k = keys[i]
        out[i, 0] = unpack_x(k)
        out[i, 1] = unpack_y(k)
        out[i, 2] = unpack_z(k)
    return out


@njit(cache=True, inline="always")
def _resolve(slot_of, vx, vy, vz, side):
    """Global voxel coords -> (block slot, linear offset); slot -1 if absent."""
    bx = vx // side
    by = vy // side
    bz = vz // side
    bkey = pack_key(bx, by, bz)
    if bkey not in slot_of:
        return np.int64(-1), np.int64(0)
    slot = slot_of[bkey]
    off = (vx - bx * side) + side * ((vy - by * side) + side * (vz - bz * side))
    return slot, off


@njit(cache=True)
def resolve_keys(voxel_keys, slot_of, side):
    """Packed global voxel keys -> (slots, linear offsets); slot -1 if absent."""
    n = voxel_keys.shape[0]
    slots = np.empty(n, dtype=np.int64)
    offs = np.empty(n, dtype=np.int64)
    for i in range(n):
        k = voxel_keys[i]
        slots[i], offs[i] = _resolve(slot_of, unpack_x(k), unpack_y(k), unpack_z(k), side)
    return slots, offs


@njit(cache=True)
def slots_of_keys(keys, slot_of):
    n = keys.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        k = keys[i]
        out[i] = slot_of[k] if k in slot_of else np.int64(-1)
    return out


# ---------------------------------------------------------------------------
# Ray traversal
# ---------------------------------------------------------------------------


@njit(cache=True)
def ray_blocks(origin, endpoint, voxel_size, side, truncation, out_set):
    """Insert the packed block keys crossed by one ray into ``out_set``.

    The ray runs from ``origin`` to ``endpoint`` plus ``truncation``
    overshoot behind the endpoint. This is the same outer walk used by
    :func:`integrate_rays`; keeping the two in lockstep is a correctness
    requirement, not an optimisation.
    """
    dx = endpoint[0] - origin[0]
    dy = endpoint[1] - origin[1]
    dz = endpoint[2] - origin[2]
    length = math.sqrt(dx * dx + dy * dy + dz * dz)
    if length <= 0.0:
        return
    inv = 1.0 / length
    dx *= inv
    dy *= inv
    dz *= inv
    t_end = length + truncation
    bs = voxel_size * side

    # Start block, derived from the start voxel so the two grids agree.
    bx = np.int64(math.floor(origin[0] / voxel_size)) // side
    by = np.int64(math.floor(origin[1] / voxel_size)) // side
    bz = np.int64(math.floor(origin[2] / voxel_size)) // side

    step_x = 1 if dx > 0.0 else (-1 if dx < 0.0 else 0)
    step_y = 1 if dy > 0.0 else (-1 if dy < 0.0 else 0)
    step_z = 1 if dz > 0.0 else (-1 if dz < 0.0 else 0)

    big = 1e300
    tmax_x = ((bx + (1 if step_x > 0 else 0)) * side * voxel_size - origin[0]) / dx if step_x != 0 else big
    tmax_y = ((by + (1 if step_y > 0 else 0)) * side * voxel_size - origin[1]) / dy if step_y != 0 else big
    tmax_z = ((bz + (1 if step_z > 0 else 0)) * side * voxel_size - origin[2]) / dz if step_z != 0 else big
    td_x = bs / abs(dx) if step_x != 0 else big
    td_y = bs / abs(dy) if step_y != 0 else big
    td_z = bs / abs(dz) if step_z != 0 else big

    while True:
        key = pack_key(bx, by, bz)
        if key not in out_set:
            out_set[key] = np.int64(1)
        # Exit t of the current block.
        t_exit = tmax_x
        axis = 0
        if tmax_y < t_exit:
            t_exit = tmax_y
            axis = 1
        if tmax_z < t_exit:
            t_exit = tmax_z
            axis = 2
        if t_exit >= t_end:
            break
        if axis == 0:
            bx += step_x
            tmax_x += td_x
        elif axis == 1:
            by += step_y
            tmax_y += td_y
        else:
            bz += step_z
            tmax_z += td_z


@njit(cache=True)
def touched_blocks(origin, points, valid, voxel_size, side, truncation, out_set):
    """Collect block coverage for a whole frame in ray (point-index) order."""
    for i in range(points.shape[0]):
        if valid[i]:
            ray_blocks(origin, points[i], voxel_size, side, truncation, out_set)


@njit(cache=True)
def integrate_rays(
    origin,
    points,
    valid,
    voxel_size,
    side,
    truncation,
    meas_weight,
    slot_of,
    distance,
    weight,
    touched_stamp,
    frame_no,
):
    """Fuse every valid ray into the map. Returns the count of block misses.

    Rays are processed in ascending point index; each ray walks blocks
    (outer) and voxels clipped to the block segment (inner), so multiple
    hits on one voxel are applied in a fixed, reproducible order. Every
    voxel on the ray gets the signed distance to the ray's endpoint
    (measured along the ray at the voxel centre) clamped to the
    truncation band; far-in-front voxels therefore receive the +band
    free-space carve. A returned miss count > 0 means a ray crossed a
    block that was never allocated, which the preprocess coverage pass
    is supposed to make impossible.
    """
    misses = 0
    for i in range(points.shape[0]):
        if not valid[i]:
            continue
        ox = origin[0]
        oy = origin[1]
        oz = origin[2]
        dx = points[i, 0] - ox
        dy = points[i, 1] - oy
        dz = points[i, 2] - oz
        length = math.sqrt(dx * dx + dy * dy + dz * dz)
        if length <= 0.0:
            continue
        inv = 1.0 / length
        dx *= inv
        dy *= inv
        dz *= inv
        t_end = length + truncation
        bs = voxel_size * side

        vx0 = np.int64(math.floor(ox / voxel_size))
        vy0 = np.int64(math.floor(oy / voxel_size))
        vz0 = np.int64(math.floor(oz / voxel_size))
        bx = vx0 // side
        by = vy0 // side
        bz = vz0 // side

        step_x = 1 if dx > 0.0 else (-1 if dx < 0.0 else 0)
        step_y = 1 if dy > 0.0 else (-1 if dy < 0.0 else 0)
        step_z = 1 if dz > 0.0 else (-1 if dz < 0.0 else 0)

        big = 1e300
        btx = ((bx + (1 if step_x > 0 else 0)) * side * voxel_size - ox) / dx if step_x != 0 else big
        bty = ((by + (1 if step_y > 0 else 0)) * side * voxel_size - oy) / dy if step_y != 0 else big
        btz = ((bz + (1 if step_z > 0 else 0)) * side * voxel_size - oz) / dz if step_z != 0 else big
        btd_x = bs / abs(dx) if step_x != 0 else big
        btd_y = bs / abs(dy) if step_y != 0 else big
        btd_z = bs / abs(dz) if step_z != 0 else big

        t_enter = 0.0
        while True:
            # Block segment [t_enter, min(exit, t_end)].
            t_exit = btx
            axis = 0
            if bty < t_exit:
                t_exit = bty
                axis = 1
            if btz < t_exit:
                t_exit = btz
                axis = 2
            seg_end = t_exit if t_exit < t_end else t_end

            bkey = pack_key(bx, by, bz)
            slot = slot_of[bkey] if bkey in slot_of else np.int64(-1)
            if slot < 0:
                misses += 1
            else:
                if touched_stamp[slot] != frame_no:
                    touched_stamp[slot] = frame_no
                lo_x = bx * side
                lo_y = by * side
                lo_z = bz * side

                # Entry voxel, clamped into the block so rounding at the
                # block face can never strand the walk outside it.
                px = ox + dx * t_enter
                py = oy + dy * t_enter
                pz = oz + dz * t_enter
                vx = np.int64(math.floor(px / voxel_size))
                vy = np.int64(math.floor(py / voxel_size))
                vz = np.int64(math.floor(pz / voxel_size))
                if vx < lo_x:
                    vx = lo_x
                elif vx > lo_x + side - 1:
                    vx = lo_x + side - 1
                if vy < lo_y:
                    vy = lo_y
                elif vy > lo_y + side - 1:
                    vy = lo_y + side - 1
                if vz < lo_z:
                    vz = lo_z
                elif vz > lo_z + side - 1:
                    vz = lo_z + side - 1

                vtx = ((vx + (1 if step_x > 0 else 0)) * voxel_size - ox) / dx if step_x != 0 else big
                vty = ((vy + (1 if step_y > 0 else 0)) * voxel_size - oy) / dy if step_y != 0 else big
                vtz = ((vz + (1 if step_z > 0 else 0)) * voxel_size - oz) / dz if step_z != 0 else big
                vtd_x = voxel_size / abs(dx) if step_x != 0 else big
                vtd_y = voxel_size / abs(dy) if step_y != 0 else big
                vtd_z = voxel_size / abs(dz) if step_z != 0 else big

                while True:
                    off = (vx - lo_x) + side * ((vy - lo_y) + side * (vz - lo_z))
                    cx = (vx + 0.5) * voxel_size
                    cy = (vy + 0.5) * voxel_size
                    cz = (vz + 0.5) * voxel_size
                    proj = dx * (cx - ox) + dy * (cy - oy) + dz * (cz - oz)
                    d_new = length - proj
                    if d_new > truncation:
                        d_new = truncation
                    elif d_new < -truncation:
                        d_new = -truncation
                    w0 = weight[slot, off]
                    w1 = w0 + meas_weight
                    d1 = (distance[slot, off] * w0 + d_new * meas_weight) / w1
                    if d1 > truncation:
                        d1 = truncation
                    elif d1 < -truncation:
                        d1 = -truncation
                    distance[slot, off] = d1
                    weight[slot, off] = w1

                    vt = vtx
                    vaxis = 0
                    if vty < vt:
                        vt = vty
                        vaxis = 1
                    if vtz < vt:
                        vt = vtz
                        vaxis = 2
                    if vt >= seg_end:
                        break
                    if vaxis == 0:
                        vx += step_x
                        if vx < lo_x or vx > lo_x + side - 1:
                            break
                        vtx += vtd_x
                    elif vaxis == 1:
                        vy += step_y
                        if vy < lo_y or vy > lo_y + side - 1:
                            break
                        vty += vtd_y
                    else:
                        vz += step_z
                        if vz < lo_z or vz > lo_z + side - 1:
                            break
                        vtz += vtd_z

            if t_exit >= t_end:
                break
            t_enter = t_exit
            if axis == 0:
                bx += step_x
                btx += btd_x
            elif axis == 1:
                by += step_y
                bty += btd_y
            else:
                bz += step_z
                btz += btd_z
    return misses


# ---------------------------------------------------------------------------
# Temporal free-space state
# ---------------------------------------------------------------------------


@njit(cache=True)
def mark_point_hits(hit_slots, hit_offsets, last_occupied, frame_no):
    for i in range(hit_slots.shape[0]):
        last_occupied[hit_slots[i], hit_offsets[i]] = frame_no


@njit(cache=True, parallel=True)
def occupancy_from_distance(touched_slots, distance, last_occupied, occ_dist, frame_no):
    nv = distance.shape[1]
    for bi in prange(touched_slots.shape[0]):
        slot = touched_slots[bi]
        for off in range(nv):
            if distance[slot, off] < occ_dist:
                last_occupied[slot, off] = frame_no


@njit(cache=True, parallel=True)
def update_duration(domain_slots, last_occupied, occupied_duration, frame_no, sparsity):
    nv = last_occupied.shape[1]
    floor_frame = frame_no - sparsity
    for bi in prange(domain_slots.shape[0]):
        slot = domain_slots[bi]
        for off in range(nv):
            if last_occupied[slot, off] >= floor_frame:
                occupied_duration[slot, off] += 1
            else:
                occupied_duration[slot, off] = 0


@njit(cache=True)
def apply_reset(
    domain_slots,
    occupied_duration,
    free,
    reset_limit,
    slot_of,
    block_coords,
    side,
    deltas,
    propagate,
):
    """Clear free flags where occupancy has persisted past ``reset_limit``.

    With ``propagate`` set, the flag is also cleared in the whole
    neighborhood (the same margin the free-flag condition uses).
    Returns the number of voxels that tripped the reset.
    """
    n_reset = 0
    nv = occupied_duration.shape[1]
    nd = deltas.shape[0]
    for bi in range(domain_slots.shape[0]):
        slot = domain_slots[bi]
        base_x = block_coords[slot, 0] * side
        base_y = block_coords[slot, 1] * side
        base_z = block_coords[slot, 2] * side
        for off in range(nv):
            if occupied_duration[slot, off] > reset_limit:
                n_reset += 1
                free[slot, off] = 0
                if propagate:
                    vx = base_x + off % side
                    vy = base_y + (off // side) % side
                    vz = base_z + off // (side * side)
                    for di in range(nd):
                        ns, noff = _resolve(
                            slot_of,
                            vx + deltas[di, 0],
                            vy + deltas[di, 1],
                            vz + deltas[di, 2],
                            side,
                        )
                        if ns >= 0:
                            free[ns, noff] = 0
    return n_reset


@njit(cache=True, parallel=True)
def update_free_flags(
    domain_slots,
    slot_of,
    block_coords,
    last_occupied,
    weight,
    free,
    frame_no,
    window,
    side,
    use_margin,
    six_connected,
):
    """Raise sticky free flags where observed idleness covers the margin.

    A voxel qualifies when it and (with ``use_margin``) its whole
    neighborhood have been observed (weight > 0) and last occupied more
    than ``window`` frames ago. Evaluated per block with a one-voxel halo
    gathered from the 26 surrounding blocks; unallocated neighbors count
    as unobserved, which keeps the flag conservative at map borders.
    """
    cutoff = frame_no - window
    ext = side + 2
    for bi in prange(domain_slots.shape[0]):
        slot = domain_slots[bi]
        bx = block_coords[slot, 0]
        by = block_coords[slot, 1]
        bz = block_coords[slot, 2]

        # Row slots of the 3x3x3 block neighborhood.
        nb = np.empty(27, dtype=np.int64)
        idx = 0
        for dz in range(-1, 2):
            for dy in range(-1, 2):
                for dx in range(-1, 2):
                    nkey = pack_key(bx + dx, by + dy, bz + dz)
                    nb[idx] = slot_of[nkey] if nkey in slot_of else np.int64(-1)
                    idx += 1

        ok = np.zeros((ext, ext, ext), dtype=np.uint8)
        for hz in range(ext):
            wz = hz - 1
            cz = 0 if wz < 0 else (2 if wz >= side else 1)
            oz = wz % side
            for hy in range(ext):
                wy = hy - 1
                cy = 0 if wy < 0 else (2 if wy >= side else 1)
                oy = wy % side
                row_base = cz * 9 + cy * 3
                for hx in range(ext):
                    wx = hx - 1
                    cx = 0 if wx < 0 else (2 if wx >= side else 1)
                    s = nb[row_base + cx]
                    if s < 0:
                        continue
                    off = (wx % side) + side * (oy + side * oz)
                    if weight[s, off] > 0.0 and last_occupied[s, off] < cutoff:
                        ok[hz, hy, hx] = 1

        if not use_margin:
            for z in range(side):
                for y in range(side):
                    for x in range(side):
                        if ok[z + 1, y + 1, x + 1]:
                            off = x + side * (y + side * z)
                            free[slot, off] = 1
        elif six_connected:
            for z in range(1, side + 1):
                for y in range(1, side + 1):
                    for x in range(1, side + 1):
                        if (
                            ok[z, y, x]
                            and ok[z - 1, y, x]
                            and ok[z + 1, y, x]
                            and ok[z, y - 1, x]
                            and ok[z, y + 1, x]
                            and ok[z, y, x - 1]
                            and ok[z, y, x + 1]
                        ):
                            off = (x - 1) + side * ((y - 1) + side * (z - 1))
                            free[slot, off] = 1
        else:
            # Full-cube erosion, separable into three axis passes.
            tmp = np.zeros((ext, ext, ext), dtype=np.uint8)
            for z in range(ext):
                for y in range(ext):
                    for x in range(1, ext - 1):
                        tmp[z, y, x] = ok[z, y, x - 1] & ok[z, y, x] & ok[z, y, x + 1]
            for z in range(ext):
                for x in range(ext):
                    for y in range(1, ext - 1):
                        ok[z, y, x] = tmp[z, y - 1, x] & tmp[z, y, x] & tmp[z, y + 1, x]
            for y in range(1, ext - 1):
                for x in range(1, ext - 1):
                    for z in range(1, ext - 1):
                        if ok[z - 1, y, x] & ok[z, y, x] & ok[z + 1, y, x]:
                            off = (x - 1) + side * ((y - 1) + side * (z - 1))
                            free[slot, off] = 1


# ---------------------------------------------------------------------------
# Detection
# ---------------------------------------------------------------------------


@njit(cache=True)
def free_lookup(voxel_keys, slot_of, free, side):
    """free-flag value per packed global voxel key (0 when unallocated)."""
    n = voxel_keys.shape[0]
    out = np.zeros(n, dtype=np.uint8)
    for i in range(n):
        k = voxel_keys[i]
        slot, off = _resolve(slot_of, unpack_x(k), unpack_y(k), unpack_z(k), side)
        if slot >= 0 and free[slot, off]:
            out[i] = 1
    return out


@njit(cache=True)
def free_in_neighborhood(voxel_keys, slot_of, free, side, deltas):
    """1 where the voxel or any neighbor carries the free flag."""
    n = voxel_keys.shape[0]
    nd = deltas.shape[0]
    out = np.zeros(n, dtype=np.uint8)
    for i in range(n):
        k = voxel_keys[i]
        vx = unpack_x(k)
        vy = unpack_y(k)
        vz = unpack_z(k)
        slot, off = _resolve(slot_of, vx, vy, vz, side)
        if slot >= 0 and free[slot, off]:
            out[i] = 1
            continue
        for di in range(nd):
            slot, off = _resolve(
                slot_of, vx + deltas[di, 0], vy + deltas[di, 1], vz + deltas[di, 2], side
            )
            if slot >= 0 and free[slot, off]:
                out[i] = 1
                break
    return out


@njit(cache=True)
def connected_components(sorted_keys, packed_deltas):
    """Label connected components over a set of packed voxel keys.

    ``sorted_keys`` must be ascending and duplicate-free; component ids
    are assigned in first-touch order of that scan, which makes id 0 the
    component containing the lexicographically smallest voxel.
    """
    n = sorted_keys.shape[0]
    comp = np.full(n, -1, dtype=np.int32)
    if n == 0:
        return comp, 0
    index_of = Dict.empty(types.int64, types.int64)
    for i in range(n):
        index_of[sorted_keys[i]] = np.int64(i)
    stack = np.empty(n, dtype=np.int64)
    nd = packed_deltas.shape[0]
    cid = 0
    for i in range(n):
        if comp[i] >= 0:
            continue
        comp[i] = cid
        stack[0] = i
        top = 1
        while top > 0:
            top -= 1
            j = stack[top]
            base = sorted_keys[j]
            for di in range(nd):
                nkey = base + packed_deltas[di]
                idx = index_of[nkey] if nkey in index_of else np.int64(-1)
                if idx >= 0 and comp[idx] < 0:
                    comp[idx] = cid
                    stack[top] = idx
                    top += 1
        cid += 1
    return comp, cid


@njit(cache=True)
def zero_weights(voxel_keys, slot_of, weight, side):
    """Zero the fusion weight of the given voxels (skips unallocated)."""
    for i in range(voxel_keys.shape[0]):
        k = voxel_keys[i]
        slot, off = _resolve(slot_of, unpack_x(k), unpack_y(k), unpack_z(k), side)
        if slot >= 0:
            weight[slot, off] = 0.0
