"""File formats: binary clouds/labels, pose text, config YAML, sequences."""

import math

import numpy as np
import pytest

from voxmod.errors import DataFormatError
from voxmod.geometry import Pose
from voxmod.integrator import Frame
from voxmod.io import (
    LABELS_MAGIC,
    POINTS_MAGIC,
    SequenceReader,
    SequenceWriter,
    frame_name,
    load_config,
    read_labels,
    read_points,
    read_points_text,
    read_poses,
    save_config,
    write_labels,
    write_points,
    write_poses,
)
from voxmod.voxel_map import MapConfig


# ------------------------------------------------------------- binary clouds

def test_points_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    pts = rng.uniform(-50, 50, (137, 3))
    path = tmp_path / "cloud.bin"
    write_points(path, pts)
    back = read_points(path)
    assert back.dtype == np.float64
    np.testing.assert_allclose(back, pts, atol=1e-4)  # f32 storage


def test_empty_cloud_round_trip(tmp_path):
    path = tmp_path / "empty.bin"
    write_points(path, np.empty((0, 3)))
    assert read_points(path).shape == (0, 3)


def test_points_reject_bad_shape(tmp_path):
    with pytest.raises(ValueError):
        write_points(tmp_path / "x.bin", np.zeros((3, 2)))


def test_truncated_file_is_diagnosed(tmp_path):
    path = tmp_path / "cut.bin"
    write_points(path, np.zeros((10, 3)))
    data = path.read_bytes()
    path.write_bytes(data[:-5])
    with pytest.raises(DataFormatError, match="cut.bin"):
        read_points(path)


def test_bad_magic_is_diagnosed(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE" + bytes(8))
    with pytest.raises(DataFormatError, match="magic"):
        read_points(path)


def test_wrong_version_is_diagnosed(tmp_path):
    import struct

    path = tmp_path / "v9.bin"
    path.write_bytes(struct.pack("<4sII", POINTS_MAGIC, 9, 0))
    with pytest.raises(DataFormatError, match="version"):
        read_points(path)


def test_label_file_is_not_a_point_file(tmp_path):
    path = tmp_path / "labels.bin"
    write_labels(path, np.array([1, 0, 1], dtype=np.uint8))
    with pytest.raises(DataFormatError, match="magic"):
        read_points(path)


# ------------------------------------------------------------------- labels

def test_labels_round_trip(tmp_path):
    labels = np.array([True, False, True, True, False])
    path = tmp_path / "l.bin"
    write_labels(path, labels)
    back = read_labels(path)
    assert back.dtype == bool
    np.testing.assert_array_equal(back, labels)


def test_labels_length_check(tmp_path):
    path = tmp_path / "l.bin"
    write_labels(path, np.ones(4, dtype=bool))
    path.write_bytes(path.read_bytes() + b"\x01")
    with pytest.raises(DataFormatError, match="expected"):
        read_labels(path)


# --------------------------------------------------------------- text clouds

def test_text_reader_accepts_comments_and_blanks(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("# header\n1.0 2.0 3.0\n\n4.0 5.0 6.0  # trailing note\n")
    pts = read_points_text(path)
    np.testing.assert_allclose(pts, [[1, 2, 3], [4, 5, 6]])


def test_text_reader_reports_line_numbers(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("1 2 3\n4 5\n")
    with pytest.raises(DataFormatError, match="bad.txt:2"):
        read_points_text(path)
    path.write_text("1 2 three\n")
    with pytest.raises(DataFormatError, match="bad.txt:1"):
        read_points_text(path)


# -------------------------------------------------------------------- poses

def test_poses_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    poses = []
    for i in range(5):
        yaw = rng.uniform(-np.pi, np.pi)
        poses.append((i, Pose.from_yaw(yaw, rng.uniform(-10, 10, 3))))
    path = tmp_path / "poses.txt"
    write_poses(path, poses)
    back = read_poses(path)
    assert sorted(back) == [0, 1, 2, 3, 4]
    for i, pose in poses:
        np.testing.assert_allclose(back[i].translation, pose.translation, atol=1e-8)
        np.testing.assert_allclose(back[i].rotation, pose.rotation, atol=1e-8)


def test_pose_reader_rejects_duplicates(tmp_path):
    path = tmp_path / "poses.txt"
    path.write_text("0 0 0 0 1 0 0 0\n0 1 0 0 1 0 0 0\n")
    with pytest.raises(DataFormatError, match="duplicate"):
        read_poses(path)


def test_pose_reader_rejects_short_lines(tmp_path):
    path = tmp_path / "poses.txt"
    path.write_text("0 0 0 0 1 0 0\n")
    with pytest.raises(DataFormatError):
        read_poses(path)


# -------------------------------------------------------------------- config

def test_config_round_trip(tmp_path):
    cfg = MapConfig(voxel_size=0.1, temporal_window=7, reset_duration=40.0)
    path = tmp_path / "map.yaml"
    save_config(path, cfg)
    assert load_config(path) == cfg


def test_config_infinity_round_trip(tmp_path):
    cfg = MapConfig(reset_duration=math.inf)
    path = tmp_path / "map.yaml"
    save_config(path, cfg)
    back = load_config(path)
    assert math.isinf(back.reset_duration)


def test_config_accepts_inf_string(tmp_path):
    path = tmp_path / "map.yaml"
    path.write_text("reset_duration: inf\n")
    assert math.isinf(load_config(path).reset_duration)


def test_config_unknown_field_is_diagnosed(tmp_path):
    path = tmp_path / "map.yaml"
    path.write_text("voxel_size: 0.2\nvoxel_siize: 0.3\n")
    with pytest.raises(DataFormatError, match="voxel_siize"):
        load_config(path)


def test_config_invalid_value_is_diagnosed(tmp_path):
    path = tmp_path / "map.yaml"
    path.write_text("block_voxels: 4000\n")
    with pytest.raises(DataFormatError, match="cube"):
        load_config(path)


def test_empty_config_file_gives_defaults(tmp_path):
    path = tmp_path / "map.yaml"
    path.write_text("")
    assert load_config(path) == MapConfig()


# ---------------------------------------------------------------- sequences

def write_sequence(root, n=3, with_labels=True, config=None):
    rng = np.random.default_rng(9)
    writer = SequenceWriter(root, config=config)
    for t in range(n):
        pts = rng.uniform(-5, 5, (20 + t, 3))
        frame = Frame(index=t, points=pts, pose=Pose.from_yaw(0.1 * t, [t * 0.5, 0.0, 0.0]))
        labels = (rng.random(pts.shape[0]) < 0.2) if with_labels else None
        writer.add_frame(frame, labels)
    writer.close()
    return root


def test_sequence_round_trip(tmp_path):
    root = write_sequence(tmp_path / "seq", config=MapConfig(voxel_size=0.25, occupancy_distance=0.3))
    reader = SequenceReader(root)
    assert len(reader) == 3
    assert reader.config().voxel_size == 0.25
    frames = list(reader.frames())
    assert [f.index for f in frames] == [0, 1, 2]
    assert frames[1].points.shape == (21, 3)
    np.testing.assert_allclose(frames[2].pose.translation, [1.0, 0.0, 0.0], atol=1e-8)
    truth = reader.read_truth(1)
    assert truth is not None and truth.shape == (21,)


def test_sequence_without_labels_or_config(tmp_path):
    root = write_sequence(tmp_path / "seq", with_labels=False)
    reader = SequenceReader(root)
    assert reader.config() is None
    assert reader.read_truth(0) is None


def test_label_count_mismatch_rejected(tmp_path):
    writer = SequenceWriter(tmp_path / "seq")
    frame = Frame(index=0, points=np.zeros((5, 3)), pose=Pose())
    with pytest.raises(ValueError, match="labels"):
        writer.add_frame(frame, labels=np.ones(4, dtype=bool))


def test_reader_requires_layout(tmp_path):
    with pytest.raises(DataFormatError, match="points"):
        SequenceReader(tmp_path)
    (tmp_path / "points").mkdir()
    with pytest.raises(DataFormatError, match="poses"):
        SequenceReader(tmp_path)


def test_reader_requires_pose_for_every_frame(tmp_path):
    root = write_sequence(tmp_path / "seq")
    write_points(root / "points" / frame_name(7), np.zeros((2, 3)))
    with pytest.raises(DataFormatError, match="7"):
        SequenceReader(root)


def test_reader_falls_back_to_text_frames(tmp_path):
    root = tmp_path / "seq"
    (root / "points").mkdir(parents=True)
    (root / "points" / "000000.txt").write_text("1.0 0.0 0.5\n2.0 0.0 0.5\n")
    write_poses(root / "poses.txt", [(0, Pose())])
    reader = SequenceReader(root)
    frame = reader.read_frame(0)
    np.testing.assert_allclose(frame.points, [[1.0, 0.0, 0.5], [2.0, 0.0, 0.5]])
