"""Synthetic LiDAR scenes: boxes, planes, movers, a spinning-scanner
sensor model, optional pose drift, and per-point ground-truth labels.

Everything is ray-cast analytically (slab tests against boxes, plane
intersections), so scenes are cheap to render and the ground truth is
exact: a point is dynamic iff the first surface its ray hits belongs to
an object that has moved from its initial placement by the time of the
frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose
from .integrator import Frame

_EPS = 1e-12


def _as_vec3(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"{name} must have 3 components, got {arr.shape}")
    return arr


@dataclass
class BoxSpec:
    """An axis-aligned box (optionally yawed) that stays put."""

    center: np.ndarray
    size: np.ndarray
    yaw: float = 0.0

    def __post_init__(self):
        self.center = _as_vec3(self.center, "center")
        self.size = _as_vec3(self.size, "size")
        if np.any(self.size <= 0):
            raise ValueError("box size must be positive in all axes")


@dataclass
class PlaneSpec:
    """An infinite plane; only the side faced by ``normal`` returns hits."""

    point: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        self.point = _as_vec3(self.point, "point")
        n = _as_vec3(self.normal, "normal")
        norm = float(np.linalg.norm(n))
        if norm < 1e-9:
            raise ValueError("plane normal must be nonzero")
        self.normal = n / norm


@dataclass
class MoverSpec:
    """A box that follows position/yaw keyframes (linear interpolation).

    ``keyframes`` maps frame index -> (position, yaw). Between keyframes
    the pose is interpolated; before the first and after the last it is
    held. The object counts as dynamic from the first frame its pose
    differs from its initial pose.
    """

    size: np.ndarray
    keyframes: list  # [(frame, position, yaw), ...] sorted by frame

    def __post_init__(self):
        self.size = _as_vec3(self.size, "size")
        if np.any(self.size <= 0):
            raise ValueError("mover size must be positive in all axes")
        if not self.keyframes:
            raise ValueError("mover needs at least one keyframe")
        kf = []
        for entry in self.keyframes:
            frame, pos, yaw = entry
            kf.append((int(frame), _as_vec3(pos, "keyframe position"), float(yaw)))
        kf.sort(key=lambda e: e[0])
        frames = [e[0] for e in kf]
        if len(set(frames)) != len(frames):
            raise ValueError("duplicate keyframe frame indices")
        self.keyframes = kf

    def pose_at(self, frame: int) -> tuple[np.ndarray, float]:
        kf = self.keyframes
        if frame <= kf[0][0]:
            return kf[0][1], kf[0][2]
        if frame >= kf[-1][0]:
            return kf[-1][1], kf[-1][2]
        for i in range(len(kf) - 1):
            f0, p0, y0 = kf[i]
            f1, p1, y1 = kf[i + 1]
            if f0 <= frame <= f1:
                a = (frame - f0) / (f1 - f0)
                return p0 + a * (p1 - p0), y0 + a * (y1 - y0)
        raise AssertionError("unreachable")

    def first_moved_frame(self) -> int | None:
        """First frame whose pose differs from the initial one, or None."""
        p0, y0 = self.keyframes[0][1], self.keyframes[0][2]
        lo = self.keyframes[0][0]
        hi = self.keyframes[-1][0]
        for f in range(lo, hi + 1):
            p, y = self.pose_at(f)
            if np.any(np.abs(p - p0) > 1e-9) or abs(y - y0) > 1e-9:
                return f
        return None


@dataclass
class SensorRig:
    """Spinning-scanner ray pattern plus range noise.

    Rays are an azimuth x elevation grid in the sensor frame; azimuth
    spans ``azimuth_span_deg`` centred on +x, elevations are uniform in
    [elevation_min_deg, elevation_max_deg].
    """

    azimuth_count: int = 512
    elevation_count: int = 64
    azimuth_span_deg: float = 360.0
    elevation_min_deg: float = -45.0
    elevation_max_deg: float = 45.0
    max_range: float = 30.0
    noise_sigma: float = 0.02
    seed: int = 0

    def directions(self) -> np.ndarray:
        """(R, 3) unit ray directions in the sensor frame."""
        span = math.radians(self.azimuth_span_deg)
        if self.azimuth_span_deg >= 360.0 - 1e-9:
            az = np.arange(self.azimuth_count) * (2.0 * math.pi / self.azimuth_count)
        else:
            az = np.linspace(-span / 2.0, span / 2.0, self.azimuth_count)
        el = np.radians(np.linspace(self.elevation_min_deg, self.elevation_max_deg, self.elevation_count))
        azg, elg = np.meshgrid(az, el, indexing="ij")
        ce = np.cos(elg.ravel())
        return np.stack(
            [ce * np.cos(azg.ravel()), ce * np.sin(azg.ravel()), np.sin(elg.ravel())], axis=1
        )


@dataclass
class DriftSpec:
    """Synthetic localization error accumulated over time.

    ``linear`` drifts at a constant rate along ``direction``; a
    ``random_walk`` perturbs the direction each frame but keeps the same
    per-frame step length; ``jitter`` is non-accumulating per-frame pose
    noise (iid gaussian, sigma = rate/frame_rate per axis), the kind a
    scan matcher leaves even when its long-term drift is zero.
    ``yaw_rate_deg`` adds heading error on top.
    """

    mode: str = "none"  # none | linear | random_walk | jitter
    rate: float = 0.0  # metres of position error per second
    direction: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    yaw_rate_deg: float = 0.0
    seed: int = 1234

    def __post_init__(self):
        if self.mode not in ("none", "linear", "random_walk", "jitter"):
            raise ValueError(f"unknown drift mode {self.mode!r}")
        self.direction = _as_vec3(self.direction, "direction")
        n = float(np.linalg.norm(self.direction))
        if n < 1e-9:
            raise ValueError("drift direction must be nonzero")
        self.direction = self.direction / n

    def offsets(self, n_frames: int, frame_rate: float) -> tuple[np.ndarray, np.ndarray]:
        """Per-frame (positions (T,3), yaws (T,)) of the accumulated error."""
        pos = np.zeros((n_frames, 3))
        yaw = np.zeros(n_frames)
        if self.mode == "none" or self.rate == 0.0:
            return pos, yaw
        step = self.rate / frame_rate
        yaw_step = math.radians(self.yaw_rate_deg) / frame_rate
        if self.mode == "linear":
            for t in range(1, n_frames):
                pos[t] = self.direction * step * t
                yaw[t] = yaw_step * t
        elif self.mode == "jitter":
            rng = np.random.default_rng(self.seed)
            pos[1:] = rng.standard_normal((n_frames - 1, 3)) * step
            yaw[1:] = rng.standard_normal(n_frames - 1) * yaw_step
        else:
            rng = np.random.default_rng(self.seed)
            d = self.direction.copy()
            for t in range(1, n_frames):
                d = d + 0.35 * rng.standard_normal(3)
                d /= max(float(np.linalg.norm(d)), 1e-9)
                pos[t] = pos[t - 1] + d * step
                yaw[t] = yaw[t - 1] + yaw_step
        return pos, yaw


def _ray_box_hits(origins, dirs, center, size, yaw):
    """Vectorized slab test. Returns hit distances (inf on miss).

    Interior origins hit the exit face, so a sensor inside a room box
    sees its walls.
    """
    if yaw != 0.0:
        c, s = math.cos(-yaw), math.sin(-yaw)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        o = (origins - center) @ rot.T
        d = dirs @ rot.T
    else:
        o = origins - center
        d = dirs
    half = size / 2.0
    d_safe = np.where(np.abs(d) < _EPS, _EPS, d)
    t1 = (-half - o) / d_safe
    t2 = (half - o) / d_safe
    tmin = np.minimum(t1, t2).max(axis=1)
    tmax = np.maximum(t1, t2).min(axis=1)
    hit = (tmax >= tmin) & (tmax > 1e-9)
    t = np.where(tmin > 1e-9, tmin, tmax)  # inside the box -> exit face
    return np.where(hit, t, np.inf)


def _ray_plane_hits(origins, dirs, point, normal):
    denom = dirs @ normal
    denom_safe = np.where(np.abs(denom) < _EPS, _EPS, denom)
    t = ((point - origins) @ normal) / denom_safe
    hit = (np.abs(denom) >= 1e-9) & (t > 1e-9)
    return np.where(hit, t, np.inf)


@dataclass
class SceneFrame:
    """One rendered frame: a posed cloud plus exact per-point labels."""

    frame: Frame
    truth_dynamic: np.ndarray  # (N,) bool, aligned with frame.points
    true_pose: Pose  # pose without drift error applied


class SyntheticScene:
    """Renders a trajectory through boxes/planes/movers into labeled frames."""

    def __init__(
        self,
        boxes: list[BoxSpec] | None = None,
        planes: list[PlaneSpec] | None = None,
        movers: list[MoverSpec] | None = None,
        rig: SensorRig | None = None,
        trajectory: list | None = None,
        frame_rate: float = 10.0,
        drift: DriftSpec | None = None,
    ):
        self.boxes = list(boxes or [])
        self.planes = list(planes or [])
        self.movers = list(movers or [])
        self.rig = rig if rig is not None else SensorRig()
        # trajectory: [(position, yaw)] per frame; a single entry is held.
        self.trajectory = [(np.zeros(3), 0.0)] if not trajectory else [
            (_as_vec3(p, "trajectory position"), float(y)) for p, y in trajectory
        ]
        self.frame_rate = float(frame_rate)
        self.drift = drift if drift is not None else DriftSpec()
        self._first_moved = [m.first_moved_frame() for m in self.movers]
        self._dirs = self.rig.directions()

    @property
    def n_frames(self) -> int:
        return len(self.trajectory)

    def sensor_pose(self, t: int) -> Pose:
        pos, yaw = self.trajectory[min(t, len(self.trajectory) - 1)]
        return Pose.from_yaw(yaw, pos)

    def render(self, t: int) -> SceneFrame:
        """Ray-cast frame ``t``: returns sensor-frame points + labels."""
        true_pose = self.sensor_pose(t)
        origin = true_pose.translation
        dirs_world = self._dirs @ true_pose.rotation.T
        n_rays = dirs_world.shape[0]
        origins = np.broadcast_to(origin, (n_rays, 3))

        best_t = np.full(n_rays, np.inf)
        dynamic = np.zeros(n_rays, dtype=bool)
        for box in self.boxes:
            t_hit = _ray_box_hits(origins, dirs_world, box.center, box.size, box.yaw)
            closer = t_hit < best_t
            best_t = np.where(closer, t_hit, best_t)
            dynamic &= ~closer
        for plane in self.planes:
            t_hit = _ray_plane_hits(origins, dirs_world, plane.point, plane.normal)
            closer = t_hit < best_t
            best_t = np.where(closer, t_hit, best_t)
            dynamic &= ~closer
        for mover, first_moved in zip(self.movers, self._first_moved):
            pos, yaw = mover.pose_at(t)
            t_hit = _ray_box_hits(origins, dirs_world, pos, mover.size, yaw)
            closer = t_hit < best_t
            best_t = np.where(closer, t_hit, best_t)
            is_dyn = first_moved is not None and t >= first_moved
            dynamic = np.where(closer, is_dyn, dynamic)

        rng = np.random.default_rng([self.rig.seed, t])
        hit = np.isfinite(best_t) & (best_t <= self.rig.max_range)
        noise = rng.normal(0.0, self.rig.noise_sigma, n_rays)  # one draw per ray
        ranges = np.maximum(best_t[hit] + noise[hit], 1e-3)

        points_world = origins[hit] + dirs_world[hit] * ranges[:, None]
        dynamic = dynamic[hit]

        # Reported (possibly drifting) pose; sensor-frame points are exact,
        # so drift shows up as a world-frame inconsistency, as it would
        # from an odometry error.
        drift_pos, drift_yaw = self._drift_offsets()
        rep_pos = true_pose.translation + drift_pos[t]
        rep_yaw = math.atan2(true_pose.rotation[1, 0], true_pose.rotation[0, 0]) + drift_yaw[t]
        reported = Pose.from_yaw(rep_yaw, rep_pos)

        points_sensor = true_pose.inverse().apply(points_world)
        return SceneFrame(
            frame=Frame(index=t, points=points_sensor, pose=reported),
            truth_dynamic=dynamic,
            true_pose=true_pose,
        )

    def _drift_offsets(self):
        if not hasattr(self, "_drift_cache") or self._drift_cache[0] < self.n_frames:
            pos, yaw = self.drift.offsets(self.n_frames, self.frame_rate)
            self._drift_cache = (self.n_frames, pos, yaw)
        return self._drift_cache[1], self._drift_cache[2]

    def frames(self):
        for t in range(self.n_frames):
            yield self.render(t)


def straight_trajectory(start, end, n_frames: int, yaw: float = 0.0) -> list:
    """Constant-velocity path from start to end over n_frames."""
    start = _as_vec3(start, "start")
    end = _as_vec3(end, "end")
    if n_frames < 1:
        raise ValueError("need at least one frame")
    if n_frames == 1:
        return [(start, yaw)]
    alphas = np.linspace(0.0, 1.0, n_frames)
    return [(start + a * (end - start), yaw) for a in alphas]


def orbit_trajectory(center, radius: float, n_frames: int, revolutions: float = 1.0,
                     z: float = 0.0, face_center: bool = True) -> list:
    """Circular path around ``center``; yaw faces the center if asked."""
    center = _as_vec3(center, "center")
    out = []
    for t in range(n_frames):
        a = 2.0 * math.pi * revolutions * t / max(n_frames - 1, 1)
        pos = center + np.array([radius * math.cos(a), radius * math.sin(a), z])
        yaw = (a + math.pi) if face_center else 0.0
        out.append((pos, yaw))
    return out


_SCENE_KEYS = {
    "boxes", "planes", "movers", "sensor", "drift", "trajectory",
    "n_frames", "frame_rate", "map",
}


def scene_from_dict(data: dict) -> SyntheticScene:
    """Build a scene from a plain-dict description (YAML-friendly).

    Errors name the offending field (e.g. ``boxes[1]``) so scene files
    are debuggable. The optional ``map`` section is not consumed here —
    it carries voxel-map overrides for whoever renders the scene.
    """
    if not isinstance(data, dict):
        raise ValueError(f"scene description must be a mapping, got {type(data).__name__}")
    unknown = set(data) - _SCENE_KEYS
    if unknown:
        raise ValueError(f"unknown scene field(s): {', '.join(sorted(unknown))}")

    def build(section, index, ctor, **kwargs):
        try:
            return ctor(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"{section}[{index}]: {exc}") from None

    boxes = [build("boxes", i, BoxSpec, **b) for i, b in enumerate(data.get("boxes", []))]
    planes = [build("planes", i, PlaneSpec, **p) for i, p in enumerate(data.get("planes", []))]
    movers = []
    for i, m in enumerate(data.get("movers", [])):
        if "size" not in m or "keyframes" not in m:
            raise ValueError(f"movers[{i}]: needs 'size' and 'keyframes'")
        movers.append(
            build(
                "movers", i, MoverSpec,
                size=m["size"],
                keyframes=[(k["frame"], k["position"], k.get("yaw", 0.0)) for k in m["keyframes"]],
            )
        )
    try:
        rig = SensorRig(**data.get("sensor", {}))
    except (TypeError, ValueError) as exc:
        raise ValueError(f"sensor: {exc}") from None
    try:
        drift = DriftSpec(**data.get("drift", {})) if "drift" in data else None
    except (TypeError, ValueError) as exc:
        raise ValueError(f"drift: {exc}") from None
    traj_spec = data.get("trajectory", {})
    kind = traj_spec.get("kind", "static")
    n_frames = int(data.get("n_frames", traj_spec.get("n_frames", 1)))
    try:
        if kind == "static":
            pos = traj_spec.get("position", [0.0, 0.0, 0.0])
            yaw = float(traj_spec.get("yaw", 0.0))
            trajectory = [(_as_vec3(pos, "position"), yaw)] * n_frames
        elif kind == "straight":
            trajectory = straight_trajectory(
                traj_spec["start"], traj_spec["end"], n_frames, float(traj_spec.get("yaw", 0.0))
            )
        elif kind == "orbit":
            trajectory = orbit_trajectory(
                traj_spec["center"],
                float(traj_spec["radius"]),
                n_frames,
                float(traj_spec.get("revolutions", 1.0)),
                float(traj_spec.get("z", 0.0)),
                bool(traj_spec.get("face_center", True)),
            )
        else:
            raise ValueError(f"unknown kind {kind!r}")
    except KeyError as exc:
        raise ValueError(f"trajectory: missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ValueError(f"trajectory: {exc}") from None
    return SyntheticScene(
        boxes=boxes,
        planes=planes,
        movers=movers,
        rig=rig,
        trajectory=trajectory,
        frame_rate=float(data.get("frame_rate", 10.0)),
        drift=drift,
    )
