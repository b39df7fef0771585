"""Sphere proxies for angular coverage.

Each detected complex object is abstracted as a sphere whose surface is
divided into evenly distributed subsurface directions; a subsurface is
marked covered once the camera has photographed the object from (near)
that direction. Spheres merge when they collide so clusters of objects
are guided as one target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache

import numpy as np

from .detection import Detection, object_depth
from .geometry import CameraFrame, Pose, ViewFrustum, back_project, fov_fraction

# Display-mode boundaries as fractions of the vertical field of view: the
# full sphere appears from 20% and disappears past 100%.
FULL_FOV_FRACTION = 0.20
HIDDEN_FOV_FRACTION = 1.00

DEFAULT_SCALE = 0.75
DEFAULT_SUBSURFACE_COUNT = 32
DEFAULT_RADIUS_CAP = 1.0
DEFAULT_DEPTH_TOLERANCE = 0.05

MERGE_MIDPOINT = "midpoint"
MERGE_ENCLOSING = "enclosing"

_UNIT_TOL = 1e-9


class InvalidDetectionError(ValueError):
    """Raised for detections that cannot produce a sphere (zero-extent bbox)."""


class NonIntersectingError(ValueError):
    """Raised when merge() is called on spheres that do not intersect."""


class DisplayMode(str, Enum):
    FULL = "full"
    DOT = "dot"
    HIDDEN = "hidden"


@dataclass(frozen=True)
class DisplayState:
    """How a sphere should be drawn for one pose: mode plus the depth
    tolerance driving per-pixel occlusion alpha."""

    mode: DisplayMode
    depth_tolerance: float = DEFAULT_DEPTH_TOLERANCE

    def __post_init__(self):
        if self.depth_tolerance <= 0:
            raise ValueError("depth tolerance must be positive")


@dataclass(frozen=True, eq=False)
class SphereProxy:
    """Sphere (center, radius) with per-subsurface covered flags.

    ``directions`` is the canonical unit-vector set shared by every sphere
    with the same subsurface count, which makes index-wise coverage
    intersection across merges well defined. Covered flags only ever flip
    False -> True; updates return new instances.
    """

    sphere_id: str
    center: np.ndarray
    radius: float
    directions: np.ndarray
    covered: np.ndarray
    created_at: float
    category: str

    def __post_init__(self):
        center = np.asarray(self.center, dtype=np.float64).reshape(3)
        center.setflags(write=False)
        object.__setattr__(self, "center", center)
        if self.radius <= 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        dirs = np.asarray(self.directions, dtype=np.float64)
        norms = np.linalg.norm(dirs, axis=1)
        if np.any(np.abs(norms - 1.0) > _UNIT_TOL):
            raise ValueError("subsurface directions must be unit vectors")
        covered = np.asarray(self.covered, dtype=bool)
        if covered.shape != (dirs.shape[0],):
            raise ValueError("covered flags must match the direction count")
        covered = covered.copy()
        covered.setflags(write=False)
        object.__setattr__(self, "covered", covered)

    @property
    def subsurface_count(self) -> int:
        return self.directions.shape[0]

    @property
    def covered_count(self) -> int:
        return int(np.count_nonzero(self.covered))

    @property
    def uncovered_count(self) -> int:
        return self.subsurface_count - self.covered_count

    def with_covered(self, indices) -> "SphereProxy":
        covered = self.covered.copy()
        covered[list(indices)] = True
        return replace(self, covered=covered)

    def to_json(self) -> dict:
        return {
            "id": self.sphere_id,
            "center": [float(v) for v in self.center],
            "radius": float(self.radius),
            "category": self.category,
            "created_at": float(self.created_at),
            "subsurfaces": [
                {"dir": [float(v) for v in d], "covered": bool(c)}
                for d, c in zip(self.directions, self.covered)
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "SphereProxy":
        dirs = np.asarray([s["dir"] for s in data["subsurfaces"]], dtype=np.float64)
        covered = np.asarray([s["covered"] for s in data["subsurfaces"]], dtype=bool)
        return cls(
            sphere_id=data["id"],
            center=np.asarray(data["center"], dtype=np.float64),
            radius=float(data["radius"]),
            directions=dirs,
            covered=covered,
            created_at=float(data.get("created_at", 0.0)),
            category=data.get("category", ""),
        )


@lru_cache(maxsize=16)
def distribute_subsurfaces(n: int) -> np.ndarray:
    """n unit directions evenly spread over the sphere (generalized spiral).

    The polar coordinate steps uniformly pole to pole (y axis) while the
    azimuth advances by ~3.6/sqrt(n * ring circumference), giving
    near-constant nearest-neighbor spacing. Deterministic in n; the result
    is cached and read-only so all spheres share one canonical set.
    """
    if n < 1:
        raise ValueError(f"subsurface count must be >= 1, got {n}")
    if n == 1:
        dirs = np.array([[0.0, 1.0, 0.0]])
    else:
        dirs = np.zeros((n, 3))
        phi = 0.0
        for k in range(n):
            h = -1.0 + 2.0 * k / (n - 1)
            ring = math.sqrt(max(0.0, 1.0 - h * h))
            if k in (0, n - 1):
                phi = 0.0
            else:
                phi = (phi + 3.6 / math.sqrt(n * ring)) % (2.0 * math.pi)
            dirs[k] = (ring * math.cos(phi), h, ring * math.sin(phi))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    dirs.setflags(write=False)
    return dirs


def generate_sphere(
    detection: Detection,
    frame: CameraFrame,
    scale: float = DEFAULT_SCALE,
    subsurface_count: int = DEFAULT_SUBSURFACE_COUNT,
    sphere_id: str = "",
    created_at: float | None = None,
) -> SphereProxy:
    """Anchor a fresh, fully uncovered sphere on a detection.

    The center back-projects the mask centroid at the object's robust mean
    depth; the pixel radius is ``scale * max(bbox extents)`` and converts
    to meters through an auxiliary point lifted that many pixels above the
    centroid.
    """
    u_min, u_max, v_min, v_max = detection.bbox
    extent_px = max(u_max - u_min, v_max - v_min)
    if extent_px <= 0:
        raise InvalidDetectionError(f"bbox {detection.bbox} has zero extent")
    depth = object_depth(detection.mask, frame.depth)
    u_o, v_o = detection.centroid()
    radius_px = scale * extent_px
    center = back_project(u_o, v_o, depth, frame.intrinsics, frame.pose)
    above = back_project(u_o, v_o - radius_px, depth, frame.intrinsics, frame.pose)
    radius = float(np.linalg.norm(above - center))
    directions = distribute_subsurfaces(subsurface_count)
    return SphereProxy(
        sphere_id=sphere_id,
        center=center,
        radius=radius,
        directions=directions,
        covered=np.zeros(subsurface_count, dtype=bool),
        created_at=frame.timestamp if created_at is None else created_at,
        category=detection.category,
    )


def display_mode(
    sphere: SphereProxy,
    pose: Pose,
    vertical_fov: float,
    full_fraction: float = FULL_FOV_FRACTION,
    hidden_fraction: float = HIDDEN_FOV_FRACTION,
) -> DisplayMode:
    """Dot below ``full_fraction`` of the FoV, Full up to ``hidden_fraction``,
    Hidden beyond (camera too close, or inside the sphere)."""
    fraction = fov_fraction(sphere.center, sphere.radius, pose, vertical_fov)
    if fraction < full_fraction:
        return DisplayMode.DOT
    if fraction < hidden_fraction:
        return DisplayMode.FULL
    return DisplayMode.HIDDEN


def display_state(
    sphere: SphereProxy,
    pose: Pose,
    vertical_fov: float,
    depth_tolerance: float = DEFAULT_DEPTH_TOLERANCE,
) -> DisplayState:
    return DisplayState(display_mode(sphere, pose, vertical_fov), depth_tolerance)


def occlusion_alpha(sphere_depth: float, scene_depth: float, depth_tolerance: float) -> float:
    """Opacity of a sphere fragment against the live scene depth.

    Fully opaque when the sphere is in front of the scene, fading linearly
    to invisible once it sits more than the tolerance behind it.
    """
    if depth_tolerance <= 0:
        raise ValueError("depth tolerance must be positive")
    delta = sphere_depth - scene_depth
    return min(1.0, max(0.0, 1.0 - delta / depth_tolerance))


def mark_coverage(
    sphere: SphereProxy,
    pose: Pose,
    frustum: ViewFrustum,
    full_fraction: float = FULL_FOV_FRACTION,
    hidden_fraction: float = HIDDEN_FOV_FRACTION,
) -> tuple[SphereProxy, list[int]]:
    """Mark the subsurface nearest the center->camera direction as covered.

    Marks only while the sphere displays Full for this pose: observations
    from dot range are too distant to count and from hidden range too
    close. Returns the updated sphere and the newly covered indices.
    """
    vfov = frustum.intrinsics.vertical_fov()
    if display_mode(sphere, pose, vfov, full_fraction, hidden_fraction) is not DisplayMode.FULL:
        return sphere, []
    towards_camera = pose.translation - sphere.center
    towards_camera = towards_camera / np.linalg.norm(towards_camera)
    index = int(np.argmax(sphere.directions @ towards_camera))
    if sphere.covered[index]:
        return sphere, []
    return sphere.with_covered([index]), [index]


def _older(a: SphereProxy, b: SphereProxy) -> SphereProxy:
    if a.created_at != b.created_at:
        return a if a.created_at < b.created_at else b
    return a if a.sphere_id <= b.sphere_id else b


def merge(a: SphereProxy, b: SphereProxy, mode: str = MERGE_MIDPOINT) -> SphereProxy:
    """Merge two intersecting spheres into one.

    When one sphere fully contains the other the larger survives
    unchanged. Otherwise the merged radius is
    ``(r1 + r2 + |c1 - c2|) / 2`` and the center is the midpoint of the
    parent centers (default) or, in "enclosing" mode, offset along the
    center axis so the result is the minimal sphere enclosing both
    parents. A subsurface is covered in the result only if covered in both
    parents; id, creation time, and category come from the older parent.
    """
    if a.subsurface_count != b.subsurface_count:
        raise ValueError("spheres must share one canonical subsurface distribution")
    distance = float(np.linalg.norm(a.center - b.center))
    if distance >= a.radius + b.radius:
        raise NonIntersectingError(
            f"centers {distance} apart with radii {a.radius} + {b.radius}: no intersection"
        )
    if a.radius == b.radius:
        big = _older(a, b)
        small = b if big is a else a
    else:
        big, small = (a, b) if a.radius > b.radius else (b, a)
    if distance + small.radius <= big.radius:
        return big
    radius = (a.radius + b.radius + distance) / 2.0
    if mode == MERGE_MIDPOINT:
        center = (a.center + b.center) / 2.0
    elif mode == MERGE_ENCLOSING:
        # Slide from a's center toward b so both parent balls fit inside.
        center = a.center + (b.center - a.center) * ((radius - a.radius) / distance)
    else:
        raise ValueError(f"unknown merge mode {mode!r}")
    older = _older(a, b)
    return SphereProxy(
        sphere_id=older.sphere_id,
        center=center,
        radius=radius,
        directions=a.directions,
        covered=a.covered & b.covered,
        created_at=older.created_at,
        category=older.category,
    )


def merge_pass(
    spheres: list[SphereProxy],
    radius_cap: float = DEFAULT_RADIUS_CAP,
    mode: str = MERGE_MIDPOINT,
) -> tuple[list[SphereProxy], list[dict]]:
    """Collapse every colliding pair until no spheres intersect.

    Trivial containments are resolved first (the enclosed sphere is simply
    discarded, so re-detections of an already-proxied object never disturb
    accumulated coverage); remaining colliding pairs then merge smallest
    merged result first. Merged radii are truncated at ``radius_cap`` so
    clusters cannot grow without bound. Returns the surviving spheres plus
    one event per merge ({"removed": [ids], "result": sphere}).
    """
    if radius_cap <= 0:
        raise ValueError("radius cap must be positive")
    result = list(spheres)
    events: list[dict] = []
    while True:
        best = None
        for i in range(len(result)):
            for j in range(i + 1, len(result)):
                a, b = result[i], result[j]
                d = float(np.linalg.norm(a.center - b.center))
                if d >= a.radius + b.radius:
                    continue
                contained = d + min(a.radius, b.radius) <= max(a.radius, b.radius)
                merged_radius = max(a.radius, b.radius) if contained else (a.radius + b.radius + d) / 2.0
                key = (not contained, merged_radius)
                if best is None or key < best[0]:
                    best = (key, i, j)
        if best is None:
            return result, events
        _, i, j = best
        a, b = result[i], result[j]
        merged = merge(a, b, mode)
        if merged.radius > radius_cap:
            merged = replace(merged, radius=radius_cap)
        removed = [s.sphere_id for s in (a, b) if s.sphere_id != merged.sphere_id]
        events.append({"removed": removed, "result": merged})
        result[i] = merged
        del result[j]
