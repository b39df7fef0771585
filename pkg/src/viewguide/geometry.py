"""Pinhole camera model, pose transforms, and angular-extent math.

Conventions used across the package:

* World frame: right-handed, y up. A pose's ``rotation`` maps camera
  coordinates into world coordinates and ``translation`` is the camera
  position in the world frame, so ``p_world = R @ p_cam + t``.
* Camera frame: x right, y down, z forward along the optical axis.
* Depth is planar: the camera-frame z coordinate of a point, not the
  length of the ray to it. This matches phone depth-map semantics.
* Pixels: u runs along image columns (width), v along rows (height),
  origin at the top-left corner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class InvalidDepthError(ValueError):
    """Raised when an operation receives a non-positive depth."""


class BehindCameraError(ValueError):
    """Raised when projecting a point at or behind the camera plane."""


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width) or not (0 <= self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside "
                f"{self.width}x{self.height} image"
            )

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def vertical_fov(self) -> float:
        """Full vertical field of view in radians."""
        return 2.0 * math.atan(self.height / (2.0 * self.fy))

    def scaled(self, width: int, height: int) -> "Intrinsics":
        """Intrinsics for the same camera resampled to a new resolution."""
        sx = width / self.width
        sy = height / self.height
        return Intrinsics(self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy, width, height)

    def to_json(self) -> dict:
        return {
            "fx": float(self.fx),
            "fy": float(self.fy),
            "cx": float(self.cx),
            "cy": float(self.cy),
            "width": int(self.width),
            "height": int(self.height),
        }

    @classmethod
    def from_json(cls, data: dict) -> "Intrinsics":
        return cls(
            fx=float(data["fx"]),
            fy=float(data["fy"]),
            cx=float(data["cx"]),
            cy=float(data["cy"]),
            width=int(data["width"]),
            height=int(data["height"]),
        )


def intrinsics_from_fov(width: int, height: int, vertical_fov_deg: float = 60.0) -> Intrinsics:
    """Square-pixel intrinsics with the principal point at the image center."""
    fy = (height / 2.0) / math.tan(math.radians(vertical_fov_deg) / 2.0)
    return Intrinsics(fx=fy, fy=fy, cx=width / 2.0, cy=height / 2.0, width=width, height=height)


_ORTHONORMAL_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Pose:
    """Camera pose: rotation (camera-to-world) and camera position in meters."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.allclose(r.T @ r, np.eye(3), atol=_ORTHONORMAL_TOL, rtol=0.0):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > _ORTHONORMAL_TOL:
            raise ValueError(f"rotation determinant is {np.linalg.det(r)}, expected 1")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def look_at(cls, position, target, up=(0.0, 1.0, 0.0)) -> "Pose":
        """Pose at ``position`` with the optical axis through ``target``.

        The camera y axis points world-down (projected orthogonal to the
        view direction), the usual vision convention.
        """
        position = np.asarray(position, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - position
        norm = np.linalg.norm(forward)
        if norm < 1e-12:
            raise ValueError("look_at target coincides with the camera position")
        z = forward / norm
        down = -np.asarray(up, dtype=np.float64)
        y = down - np.dot(down, z) * z
        ynorm = np.linalg.norm(y)
        if ynorm < 1e-9:
            # Looking straight along the up axis; pick an arbitrary image-down.
            y = np.cross(z, np.array([1.0, 0.0, 0.0]))
            ynorm = np.linalg.norm(y)
        y = y / ynorm
        x = np.cross(y, z)
        return cls(np.column_stack([x, y, z]), position)

    def world_point(self, p_cam) -> np.ndarray:
        return self.rotation @ np.asarray(p_cam, dtype=np.float64) + self.translation

    def camera_point(self, p_world) -> np.ndarray:
        return self.rotation.T @ (np.asarray(p_world, dtype=np.float64) - self.translation)

    def to_json(self) -> dict:
        return {
            "rotation": [float(v) for v in self.rotation.reshape(-1)],
            "translation": [float(v) for v in self.translation],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Pose":
        return cls(
            np.asarray(data["rotation"], dtype=np.float64).reshape(3, 3),
            np.asarray(data["translation"], dtype=np.float64),
        )


@dataclass(frozen=True)
class ViewFrustum:
    """A camera pose with intrinsics and a near/far depth range."""

    pose: Pose
    intrinsics: Intrinsics
    near: float = 0.05
    far: float = 20.0

    def __post_init__(self):
        if not (0 < self.near < self.far):
            raise ValueError(f"require 0 < near < far, got near={self.near}, far={self.far}")


@dataclass(eq=False)
class CameraFrame:
    """One captured view: color, planar depth, calibration, pose, time.

    ``object_ids`` is an optional per-pixel ground-truth id channel filled
    in by the simulator (-1 for background); real captures leave it None.
    Invalid depth pixels carry 0.0.
    """

    rgb: np.ndarray
    depth: np.ndarray
    intrinsics: Intrinsics
    pose: Pose
    timestamp: float
    object_ids: np.ndarray | None = None


def back_project(u: float, v: float, d: float, intrinsics: Intrinsics, pose: Pose) -> np.ndarray:
    """Lift pixel (u, v) at planar depth d to a world-frame point.

    Computes ``R @ (K^-1 @ (u, v, 1) * d) + t``. (u, v) is allowed to lie
    outside the image bounds so auxiliary off-image points can be lifted.
    """
    if d <= 0:
        raise InvalidDepthError(f"depth must be positive, got {d}")
    ray = np.array([(u - intrinsics.cx) / intrinsics.fx, (v - intrinsics.cy) / intrinsics.fy, 1.0])
    return pose.rotation @ (ray * d) + pose.translation


def project(point, intrinsics: Intrinsics, pose: Pose) -> tuple[float, float, float]:
    """Project a world point to (u, v, planar depth). Inverse of back_project."""
    p_cam = pose.camera_point(point)
    z = p_cam[2]
    if z <= 0:
        raise BehindCameraError(f"point has camera-frame depth {z}")
    u = intrinsics.fx * p_cam[0] / z + intrinsics.cx
    v = intrinsics.fy * p_cam[1] / z + intrinsics.cy
    return float(u), float(v), float(z)


def fov_fraction(center, radius: float, pose: Pose, vertical_fov: float) -> float:
    """Fraction of the vertical field of view a sphere's angular diameter spans.

    Returns ``2*asin(radius / dist) / vertical_fov``; +inf when the camera
    is at or inside the sphere (dist <= radius).
    """
    if not (0 < vertical_fov < math.pi):
        raise ValueError(f"vertical_fov must be in (0, pi), got {vertical_fov}")
    dist = float(np.linalg.norm(np.asarray(center, dtype=np.float64) - pose.translation))
    if dist <= radius:
        return math.inf
    return 2.0 * math.asin(radius / dist) / vertical_fov


def resize_frame(frame: CameraFrame, width: int, height: int) -> CameraFrame:
    """Nearest-neighbor resample of a frame with consistently scaled intrinsics."""
    if frame.intrinsics.width == width and frame.intrinsics.height == height:
        return frame
    rows = (np.arange(height) * frame.intrinsics.height // height).astype(np.intp)
    cols = (np.arange(width) * frame.intrinsics.width // width).astype(np.intp)
    return CameraFrame(
        rgb=frame.rgb[rows][:, cols],
        depth=frame.depth[rows][:, cols],
        intrinsics=frame.intrinsics.scaled(width, height),
        pose=frame.pose,
        timestamp=frame.timestamp,
        object_ids=None if frame.object_ids is None else frame.object_ids[rows][:, cols],
    )
