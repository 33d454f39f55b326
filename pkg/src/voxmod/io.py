"""On-disk formats: binary clouds and labels, pose lists, YAML configs,
and the sequence directory layout.

A sequence directory looks like::

    seq/
      points/000000.bin ...   # one cloud per frame
      labels/000000.bin ...   # optional, one u8 label per point
      poses.txt               # one line per frame
      map.yaml                # optional MapConfig overrides

Cloud files are little-endian: 4-byte magic ``VMPC``, u32 version (1),
u32 point count, then count * 3 float32 xyz. Label files use magic
``VMLB`` with a u8 per point. ``poses.txt`` lines are
``index tx ty tz qw qx qy qz`` (blank lines and ``#`` comments allowed).
"""
from __future__ import annotations

import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np
import yaml

from .errors import DataFormatError
from .geometry import Pose
from .integrator import Frame
from .voxel_map import MapConfig

POINTS_MAGIC = b"VMPC"
LABELS_MAGIC = b"VMLB"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sII")  # magic, version, count


def write_points(path, points: np.ndarray) -> None:
    """Write an (N, 3) array as a binary cloud file."""
    pts = np.ascontiguousarray(points, dtype=np.float32)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"points must be (N, 3), got {points.shape}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(POINTS_MAGIC, FORMAT_VERSION, pts.shape[0]))
        fh.write(pts.tobytes())


def read_points(path) -> np.ndarray:
    """Read a binary cloud file into an (N, 3) float64 array."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise DataFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, count = _HEADER.unpack_from(raw)
    if magic != POINTS_MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r}, expected {POINTS_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + count * 12
    if len(raw) != expected:
        raise DataFormatError(f"{path}: expected {expected} bytes for {count} points, found {len(raw)}")
    pts = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(count, 3)
    return pts.astype(np.float64)


def read_points_text(path) -> np.ndarray:
    """Plain-text fallback reader: one ``x y z`` line per point.

    Blank lines and ``#`` comments are skipped. Slower than the binary
    format but handy for eyeballing or hand-writing tiny clouds.
    """
    path = Path(path)
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 3:
                raise DataFormatError(f"{path}:{lineno}: expected 3 values, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
    return np.array(rows, dtype=np.float64).reshape(-1, 3)


def write_labels(path, labels: np.ndarray) -> None:
    """Write per-point labels (nonzero = dynamic) as a binary label file."""
    lab = np.ascontiguousarray(np.asarray(labels).astype(np.uint8))
    if lab.ndim != 1:
        raise ValueError(f"labels must be 1-D, got shape {labels.shape}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(LABELS_MAGIC, FORMAT_VERSION, lab.shape[0]))
        fh.write(lab.tobytes())


def read_labels(path) -> np.ndarray:
    """Read a binary label file into an (N,) bool array."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise DataFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, count = _HEADER.unpack_from(raw)
    if magic != LABELS_MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r}, expected {LABELS_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + count
    if len(raw) != expected:
        raise DataFormatError(f"{path}: expected {expected} bytes for {count} labels, found {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8, offset=_HEADER.size).astype(bool)


def write_poses(path, poses: list[tuple[int, Pose]]) -> None:
    """Write ``index tx ty tz qw qx qy qz`` lines."""
    with open(path, "w") as fh:
        fh.write("# index tx ty tz qw qx qy qz\n")
        for idx, pose in poses:
            t = pose.translation
            q = pose.quaternion()
            fh.write(
                f"{idx} {t[0]:.9f} {t[1]:.9f} {t[2]:.9f} "
                f"{q[0]:.9f} {q[1]:.9f} {q[2]:.9f} {q[3]:.9f}\n"
            )


def read_poses(path) -> dict[int, Pose]:
    """Parse a pose file into {frame index: Pose}."""
    path = Path(path)
    out: dict[int, Pose] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 8:
                raise DataFormatError(
                    f"{path}:{lineno}: expected 8 fields (index tx ty tz qw qx qy qz), got {len(parts)}"
                )
            try:
                idx = int(parts[0])
                vals = [float(p) for p in parts[1:]]
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
            if idx in out:
                raise DataFormatError(f"{path}:{lineno}: duplicate frame index {idx}")
            out[idx] = Pose.from_quaternion(vals[3:7], vals[0:3])
    return out


def save_config(path, config: MapConfig) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(asdict(config), fh, sort_keys=True)


def load_config(path) -> MapConfig:
    path = Path(path)
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if data is None:
        return MapConfig()
    if not isinstance(data, dict):
        raise DataFormatError(f"{path}: expected a mapping of config fields, got {type(data).__name__}")
    known = set(MapConfig.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise DataFormatError(f"{path}: unknown config field(s): {', '.join(sorted(unknown))}")
    if "reset_duration" in data and isinstance(data["reset_duration"], str):
        if data["reset_duration"].lower() in ("inf", ".inf", "infinity"):
            data["reset_duration"] = float("inf")
        else:
            raise DataFormatError(f"{path}: reset_duration must be a number or 'inf'")
    try:
        return MapConfig(**data)
    except (TypeError, ValueError) as exc:
        raise DataFormatError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# Sequence directories
# ---------------------------------------------------------------------------


def frame_name(index: int) -> str:
    return f"{index:06d}.bin"


class SequenceWriter:
    """Writes frames (and optional labels) into a sequence directory."""

    def __init__(self, root, config: MapConfig | None = None):
        self.root = Path(root)
        (self.root / "points").mkdir(parents=True, exist_ok=True)
        (self.root / "labels").mkdir(parents=True, exist_ok=True)
        self._poses: list[tuple[int, Pose]] = []
        if config is not None:
            save_config(self.root / "map.yaml", config)

    def add_frame(self, frame: Frame, labels: np.ndarray | None = None) -> None:
        write_points(self.root / "points" / frame_name(frame.index), frame.points)
        if labels is not None:
            if labels.shape[0] != frame.points.shape[0]:
                raise ValueError(
                    f"frame {frame.index}: {labels.shape[0]} labels for {frame.points.shape[0]} points"
                )
            write_labels(self.root / "labels" / frame_name(frame.index), labels)
        self._poses.append((frame.index, frame.pose))

    def close(self) -> None:
        write_poses(self.root / "poses.txt", self._poses)


class SequenceReader:
    """Reads a sequence directory written by :class:`SequenceWriter`
    (or anything matching the same layout)."""

    def __init__(self, root):
        self.root = Path(root)
        points_dir = self.root / "points"
        if not points_dir.is_dir():
            raise DataFormatError(f"{self.root}: missing points/ directory")
        poses_path = self.root / "poses.txt"
        if not poses_path.is_file():
            raise DataFormatError(f"{self.root}: missing poses.txt")
        self.poses = read_poses(poses_path)
        indices = set()
        for pattern in ("*.bin", "*.txt"):
            indices.update(int(p.stem) for p in points_dir.glob(pattern) if p.stem.isdigit())
        self.frame_indices = sorted(indices)
        if not self.frame_indices:
            raise DataFormatError(f"{points_dir}: no frame files (expected 000000.bin style names)")
        missing = [i for i in self.frame_indices if i not in self.poses]
        if missing:
            raise DataFormatError(
                f"{self.root}: poses.txt has no entry for frame(s) {missing[:5]}"
                + ("..." if len(missing) > 5 else "")
            )

    def __len__(self) -> int:
        return len(self.frame_indices)

    def config(self) -> MapConfig | None:
        path = self.root / "map.yaml"
        return load_config(path) if path.is_file() else None

    def read_frame(self, index: int) -> Frame:
        binary = self.root / "points" / frame_name(index)
        if binary.is_file():
            pts = read_points(binary)
        else:
            pts = read_points_text(binary.with_suffix(".txt"))
        return Frame(index=index, points=pts, pose=self.poses[index])

    def read_truth(self, index: int) -> np.ndarray | None:
        path = self.root / "labels" / frame_name(index)
        return read_labels(path) if path.is_file() else None

    def frames(self):
        for index in self.frame_indices:
            yield self.read_frame(index)
