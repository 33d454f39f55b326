"""Rigid-body poses and quaternion helpers.

Poses are stored as a 3x3 rotation matrix plus a translation vector.
Pose files on disk use unit quaternions in (w, x, y, z) order; the
conversions here round-trip to ~1e-12.
"""
from __future__ import annotations

import numpy as np

ORTHONORMAL_TOL = 1e-6


class Pose:
    """A rigid transform: ``p_world = rotation @ p_local + translation``."""

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation=None, translation=None):
        self.rotation = (
            np.eye(3) if rotation is None else np.asarray(rotation, dtype=np.float64)
        )
        self.translation = (
            np.zeros(3)
            if translation is None
            else np.asarray(translation, dtype=np.float64)
        )
        if self.rotation.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {self.rotation.shape}")
        if self.translation.shape != (3,):
            raise ValueError(
                f"translation must have 3 components, got {self.translation.shape}"
            )

    @classmethod
    def from_quaternion(cls, q, translation) -> "Pose":
        """Build a pose from a (w, x, y, z) quaternion and a translation."""
        return cls(quaternion_to_matrix(q), translation)

    @classmethod
    def from_yaw(cls, yaw: float, translation) -> "Pose":
        """Build a pose rotated by ``yaw`` radians about the world z axis."""
        c, s = np.cos(yaw), np.sin(yaw)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return cls(rot, translation)

    def quaternion(self) -> np.ndarray:
        """Return the rotation as a (w, x, y, z) unit quaternion."""
        return matrix_to_quaternion(self.rotation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (N, 3) array (or a single point) into the parent frame."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def compose(self, other: "Pose") -> "Pose":
        """Return ``self @ other`` (apply ``other`` first, then ``self``)."""
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def validate(self) -> None:
        """Raise ValueError unless the rotation is orthonormal within 1e-6."""
        err = np.abs(self.rotation @ self.rotation.T - np.eye(3)).max()
        if err > ORTHONORMAL_TOL or not np.isfinite(self.rotation).all():
            raise ValueError(f"rotation is not orthonormal (deviation {err:.2e})")
        if abs(np.linalg.det(self.rotation) - 1.0) > ORTHONORMAL_TOL:
            raise ValueError("rotation determinant is not +1")

    def __repr__(self) -> str:
        q = self.quaternion()
        t = self.translation
        return f"Pose(t=[{t[0]:.3f} {t[1]:.3f} {t[2]:.3f}], q_wxyz={np.round(q, 4)})"


def quaternion_to_matrix(q) -> np.ndarray:
    """Convert a (w, x, y, z) quaternion to a 3x3 rotation matrix.

    The quaternion is normalised first, so mildly denormalised file
    input is accepted.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (4,):
        raise ValueError(f"quaternion must have 4 components, got {q.shape}")
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise ValueError("quaternion has zero norm")
    w, x, y, z = q / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quaternion(rot: np.ndarray) -> np.ndarray:
    """Convert a rotation matrix to a (w, x, y, z) quaternion with w >= 0."""
    m = np.asarray(rot, dtype=np.float64)
    t = np.trace(m)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(m)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(m[i, i] - m[j, j] - m[k, k] + 1.0, 0.0)) * 2
        q = np.empty(4)
        q[0] = (m[k, j] - m[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (m[j, i] + m[i, j]) / s
        q[1 + k] = (m[k, i] + m[i, k]) / s
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)
