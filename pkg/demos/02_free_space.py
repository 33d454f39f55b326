"""
Watching high-confidence free space fill in
===========================================

Two different clocks govern the free-space flag. Carved air that never
held a surface frees as soon as its whole neighborhood has been
observed — for a static corridor that happens almost immediately. But
space that *was* occupied must first sit idle through the temporal
window, and that is the interesting case: this script parks a box in
the corridor, drives it away at frame 25, and watches the vacated
voxels wait out the window before the flag count jumps.
"""

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from voxmod import DetectionPipeline, MapConfig
from voxmod.scene_sim import BoxSpec, MoverSpec, SensorRig, SyntheticScene

out_dir = pathlib.Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

rig = SensorRig(
    azimuth_count=256,
    elevation_count=48,
    azimuth_span_deg=60.0,
    elevation_min_deg=-30.0,
    elevation_max_deg=30.0,
    max_range=12.0,
    noise_sigma=0.01,
    seed=11,
)
n_frames = 60
leave = 25
# The box sits at 3 m until frame 25, then jumps out of range. The
# voxels it occupied — and the wall shadow behind it — only become
# freeable once they have been observed idle for the whole window.
scene = SyntheticScene(
    boxes=[BoxSpec(center=[5.1, 0.0, 0.0], size=[0.2, 6.0, 6.0])],
    movers=[
        MoverSpec(
            size=[0.8, 0.8, 0.8],
            keyframes=[
                (0, [3.0, 0.0, 0.0], 0.0),
                (leave, [3.0, 0.0, 0.0], 0.0),
                (leave + 1, [20.0, 0.0, 0.0], 0.0),
            ],
        )
    ],
    rig=rig,
    trajectory=[(np.zeros(3), 0.0)] * n_frames,
)

config = MapConfig(min_cluster_size=8)
pipe = DetectionPipeline(config)
vmap = pipe.map


def slice_z0():
    """Flag field on the z = 0 plane: 0 unallocated, 1 mapped, 2 free."""
    xs = np.arange(-0.6, 6.0, config.voxel_size)
    ys = np.arange(-3.0, 3.0, config.voxel_size)
    grid = np.zeros((len(xs), len(ys)))
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            state = vmap.get_voxel(
                (int(np.floor(x / config.voxel_size)), int(np.floor(y / config.voxel_size)), 0)
            )
            if state is not None:
                grid[i, j] = 2.0 if state.free else 1.0
    return grid


snap_at = (leave - 5, leave + 3, n_frames - 1)
snapshots = {}
counts = []
for sf in scene.frames():
    pipe.process_frame(sf.frame)
    counts.append(int(vmap.free.sum()))
    if sf.frame.index in snap_at:
        snapshots[sf.frame.index] = slice_z0()

print(f"free voxels after first frame: {counts[0]}  (never-occupied air)")
print(f"free voxels while box parked (frame {leave}): {counts[leave]}")
print(f"free voxels at the end: {counts[-1]}")

fig, axes = plt.subplots(1, 4, figsize=(16, 4.2))
axes[0].plot(counts)
axes[0].axvline(leave, ls="--", c="gray", lw=1)
axes[0].annotate("box leaves", (leave, counts[0]), xytext=(leave + 3, counts[0]),
                 fontsize=9, color="gray")
axes[0].set_xlabel("frame")
axes[0].set_ylabel("free-flagged voxels")
axes[0].set_title(f"vacated space frees after the {config.temporal_window}-frame window")
for ax, (t, grid) in zip(axes[1:], sorted(snapshots.items())):
    ax.imshow(grid.T, origin="lower", extent=[-0.6, 6.0, -3.0, 3.0],
              cmap="cividis", vmin=0, vmax=2)
    ax.set_title(f"frame {t} (bright = free)")
    ax.set_xlabel("x (m)")
fig.tight_layout()
fig.savefig(out_dir / "02_free_space.png", dpi=120)
print(f"wrote {out_dir / '02_free_space.png'}")
