import numpy as np
import voxmod

rng = np.random.default_rng(7)
cfg = voxmod.MapConfig(voxel_size=0.2, temporal_window=5, min_cluster_size=5)
pipe = voxmod.DetectionPipeline(cfg)

# A wall at x=5, sensor at origin scanning it. 40x40 grid of wall points.
yy, zz = np.meshgrid(np.linspace(-3, 3, 40), np.linspace(-1.5, 1.5, 40))
wall = np.stack([np.full(yy.size, 5.0), yy.ravel(), zz.ravel()], axis=1)
wall += rng.normal(0, 0.01, wall.shape)
pose = voxmod.Pose()

for t in range(12):
    frame = voxmod.Frame(index=t, points=wall.copy(), pose=pose)
    res = pipe.process_frame(frame)
    print(
        f"t={t:2d} valid={res.cloud.valid_count} blocks+={res.blocks_allocated} "
        f"seeds={res.timings.n_seed_voxels} cand={res.timings.n_candidate_voxels} "
        f"dyn_pts={res.detection.dynamic_count} reset={res.voxels_reset} "
        f"free_total={int(pipe.map.free.sum())}"
    )

# Now a blob appears mid-air at x=2.5 (carved free space) -> should be detected.
blob = rng.normal([2.5, 0.0, 0.0], 0.15, (300, 3))
pts = np.vstack([wall, blob])
frame = voxmod.Frame(index=12, points=pts, pose=pose)
res = pipe.process_frame(frame)
print(
    f"t=12 BLOB dyn_pts={res.detection.dynamic_count}/{pts.shape[0]} "
    f"clusters={len(res.detection.clusters)} "
    f"cluster_sizes={[c.size for c in res.detection.clusters]}"
)
lab = res.detection.labels
print("blob labeled dynamic:", int(lab[wall.shape[0]:].sum()), "/", blob.shape[0])
print("wall labeled dynamic:", int(lab[:wall.shape[0]].sum()), "/", wall.shape[0])

st = pipe.map.get_voxel(pipe.map.point_to_voxel(np.array([5.0, 0.0, 0.0]))[0] if False else (24, 0, 0))
print("wall voxel state:", st)
mid = pipe.map.get_voxel((12, 0, 0))  # x=2.5 region
print("mid-air voxel state:", mid)
