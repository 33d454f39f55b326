"""
Where the time goes, and what it scales with
============================================

Map-update cost is designed to track the number of blocks the current
frame touches — not the total map size. To expose that, a narrow beam
watches a wall recede from 24 m to 100 m: the touched-block count grows
linearly with distance while the map itself grows much faster. A second
run clips integration at 20 m, which should pin per-frame cost flat no
matter how far the wall gets.
"""

import gc
import math
import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from voxmod import DetectionPipeline, MapConfig
from voxmod.evaluation import fit_timing_scaling
from voxmod.scene_sim import BoxSpec, MoverSpec, SensorRig, SyntheticScene

out_dir = pathlib.Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

n_frames, warmup = 110, 5
rig = SensorRig(
    azimuth_count=256,
    elevation_count=32,
    azimuth_span_deg=4.0,
    elevation_min_deg=-2.0,
    elevation_max_deg=2.0,
    max_range=110.0,
    noise_sigma=0.02,
    seed=31,
)
scene = SyntheticScene(
    boxes=[BoxSpec(center=[16.1, 0.0, -0.35], size=[0.2, 2.4, 0.7])],
    movers=[
        MoverSpec(
            size=[0.2, 12.0, 12.0],
            keyframes=[(0, [24.0, 0.0, 0.0], 0.0), (n_frames - 1, [100.0, 0.0, 0.0], 0.0)],
        )
    ],
    rig=rig,
    trajectory=[(np.zeros(3), 0.0)] * n_frames,
)
frames = list(scene.frames())


def run(max_range, repeats=3):
    """Per-frame timings, minimum over identical passes.

    The scene and the pipeline are deterministic, so every pass does
    the same work and the per-frame minimum strips scheduler noise.
    """
    passes = []
    for _ in range(repeats):
        cfg = MapConfig(voxel_size=0.4, min_cluster_size=8, max_integration_range=max_range)
        pipe = DetectionPipeline(cfg)
        gc.disable()
        try:
            passes.append([pipe.process_frame(sf.frame).timings for sf in frames][warmup:])
        finally:
            gc.enable()
    best = []
    for versions in zip(*passes):
        winner = min(versions, key=lambda t: t.total_ms)
        best.append(winner)
    return best


clipped = run(20.0)  # run the small workload before the map-growing one
growing = run(math.inf)

fit = fit_timing_scaling(growing)["map_vs_blocks"]
print(f"map time vs touched blocks: slope {fit.slope:.3f} ms/block, R^2 {fit.r_squared:.3f}")
clipped_total = np.array([t.total_ms for t in clipped])
print(
    f"clipped at 20 m: total {clipped_total.mean():.2f} ms/frame "
    f"(std/mean {clipped_total.std() / clipped_total.mean():.3f})"
)

blocks = np.array([t.n_touched_blocks for t in growing], dtype=float)
map_ms = np.array([t.integration_ms + t.freespace_ms for t in growing])

fig, (ax_fit, ax_flat) = plt.subplots(1, 2, figsize=(12, 4.5))
ax_fit.scatter(blocks, map_ms, s=10, alpha=0.6)
xs = np.array([blocks.min(), blocks.max()])
ax_fit.plot(xs, fit.slope * xs + fit.intercept, c="k", lw=1,
            label=f"fit, R$^2$ = {fit.r_squared:.3f}")
ax_fit.set_xlabel("touched blocks per frame")
ax_fit.set_ylabel("map update (ms)")
ax_fit.set_title("unbounded range: cost tracks touched blocks")
ax_fit.legend()

ax_flat.plot([t.total_ms for t in growing], label="unbounded", c="firebrick", lw=1)
ax_flat.plot(clipped_total, label="clipped at 20 m", c="seagreen", lw=1)
ax_flat.set_xlabel("frame (after warmup)")
ax_flat.set_ylabel("total per-frame (ms)")
ax_flat.set_title("range clipping pins per-frame cost")
ax_flat.legend()
fig.tight_layout()
fig.savefig(out_dir / "05_scaling.png", dpi=120)
print(f"wrote {out_dir / '05_scaling.png'}")
