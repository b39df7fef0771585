"""Deterministic synthetic capture environment.

Scenes are collections of category-labeled primitives (spheres,
axis-aligned boxes, axis-aligned rectangles) rendered with analytic
ray-primitive intersection into planar depth maps plus a per-pixel
object-id channel. Color is flat per-object false color; the synthetic
detector works from ids, so photometric realism is not needed.
"""

from __future__ import annotations

import colorsys
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING, Iterator

import numpy as np

from .geometry import CameraFrame, Intrinsics, Pose, intrinsics_from_fov

if TYPE_CHECKING:
    from .session import CaptureSession

DEPTH_INVALID = 0.0
BACKGROUND_ID = -1

_RAY_NEAR = 1e-6


@dataclass(frozen=True)
class SceneObject:
    """One primitive: shape in {"sphere", "box", "plane"} with a category label.

    ``size`` is [radius] for spheres and full extents [sx, sy, sz] for
    boxes; a plane is an axis-aligned rectangle given as a box with one
    zero extent.
    """

    shape: str
    position: np.ndarray
    size: np.ndarray
    category: str

    def __post_init__(self):
        if self.shape not in ("sphere", "box", "plane"):
            raise ValueError(f"unknown shape {self.shape!r}")
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        object.__setattr__(self, "size", np.asarray(self.size, dtype=np.float64))
        if self.shape == "sphere":
            if self.size.shape != (1,) or self.size[0] <= 0:
                raise ValueError("sphere size must be [radius > 0]")
        else:
            if self.size.shape != (3,) or np.any(self.size < 0):
                raise ValueError("box/plane size must be three non-negative extents")
            if self.shape == "plane" and np.count_nonzero(self.size == 0) != 1:
                raise ValueError("plane must have exactly one zero extent")


@dataclass
class Scene:
    objects: list[SceneObject]
    bounds_min: np.ndarray
    bounds_max: np.ndarray
    free_space_min: np.ndarray | None = None
    free_space_max: np.ndarray | None = None
    coverage_region_min: np.ndarray | None = None
    coverage_region_max: np.ndarray | None = None
    session_overrides: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        self.bounds_min = np.asarray(self.bounds_min, dtype=np.float64)
        self.bounds_max = np.asarray(self.bounds_max, dtype=np.float64)
        for obj in self.objects:
            lo, hi = _object_aabb(obj)
            if np.any(lo < self.bounds_min - 1e-9) or np.any(hi > self.bounds_max + 1e-9):
                raise ValueError(f"object {obj.category!r} at {obj.position} exceeds scene bounds")

    def to_json(self) -> dict:
        data = {
            "bounds": {"min": self.bounds_min.tolist(), "max": self.bounds_max.tolist()},
            "objects": [
                {
                    "shape": o.shape,
                    "position": o.position.tolist(),
                    "size": o.size.tolist(),
                    "category": o.category,
                }
                for o in self.objects
            ],
        }
        if self.free_space_min is not None:
            data["free_space"] = {
                "min": self.free_space_min.tolist(),
                "max": self.free_space_max.tolist(),
            }
        if self.coverage_region_min is not None:
            data["coverage_region"] = {
                "min": self.coverage_region_min.tolist(),
                "max": self.coverage_region_max.tolist(),
            }
        if self.session_overrides:
            data["session_overrides"] = self.session_overrides
        if self.name:
            data["name"] = self.name
        return data

    @classmethod
    def from_json(cls, data: dict) -> "Scene":
        objects = [
            SceneObject(
                shape=o["shape"],
                position=o["position"],
                size=o["size"],
                category=o["category"],
            )
            for o in data["objects"]
        ]
        kwargs = {}
        if "free_space" in data:
            kwargs["free_space_min"] = np.asarray(data["free_space"]["min"], dtype=np.float64)
            kwargs["free_space_max"] = np.asarray(data["free_space"]["max"], dtype=np.float64)
        if "coverage_region" in data:
            kwargs["coverage_region_min"] = np.asarray(
                data["coverage_region"]["min"], dtype=np.float64
            )
            kwargs["coverage_region_max"] = np.asarray(
                data["coverage_region"]["max"], dtype=np.float64
            )
        return cls(
            objects=objects,
            bounds_min=data["bounds"]["min"],
            bounds_max=data["bounds"]["max"],
            session_overrides=data.get("session_overrides", {}),
            name=data.get("name", ""),
            **kwargs,
        )


def _object_aabb(obj: SceneObject) -> tuple[np.ndarray, np.ndarray]:
    if obj.shape == "sphere":
        r = obj.size[0]
        return obj.position - r, obj.position + r
    half = obj.size / 2.0
    return obj.position - half, obj.position + half


def load_scene(path) -> Scene:
    with open(path) as f:
        return Scene.from_json(json.load(f))


def load_bundled_scene(name: str) -> Scene:
    text = resources.files("viewguide.data").joinpath(f"scenes/{name}.json").read_text()
    return Scene.from_json(json.loads(text))


# --- rendering -----------------------------------------------------------


@lru_cache(maxsize=8)
def _camera_rays(intrinsics: Intrinsics) -> np.ndarray:
    us = np.arange(intrinsics.width, dtype=np.float64)
    vs = np.arange(intrinsics.height, dtype=np.float64)
    uu, vv = np.meshgrid(us, vs)
    dirs = np.stack(
        [
            (uu - intrinsics.cx) / intrinsics.fx,
            (vv - intrinsics.cy) / intrinsics.fy,
            np.ones_like(uu),
        ],
        axis=-1,
    ).reshape(-1, 3)
    dirs.setflags(write=False)
    return dirs


def _pixel_rays(pose: Pose, intrinsics: Intrinsics) -> tuple[np.ndarray, np.ndarray]:
    """World-frame origin and per-pixel direction with camera-frame z = 1.

    With unit camera-z directions the ray parameter equals planar depth.
    """
    dirs_world = _camera_rays(intrinsics) @ pose.rotation.T
    return pose.translation, dirs_world


def _intersect_sphere(origin, dirs, center, radius) -> np.ndarray:
    m = origin - center
    a = np.einsum("ij,ij->i", dirs, dirs)
    b = dirs @ m
    c = float(m @ m) - radius * radius
    disc = b * b - a * c
    t = np.full(dirs.shape[0], np.inf)
    hit = disc >= 0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t_near = (-b - sq) / a
    t_far = (-b + sq) / a
    t_sel = np.where(t_near > _RAY_NEAR, t_near, t_far)
    valid = hit & (t_sel > _RAY_NEAR)
    t[valid] = t_sel[valid]
    return t


def _intersect_box(origin, dirs, lo, hi) -> np.ndarray:
    # Slab test; axis-parallel components are nudged so 1/d stays finite
    # and the +-huge slab bounds give the correct inside/outside behavior.
    safe = np.where(dirs == 0.0, 1e-30, dirs)
    inv = 1.0 / safe
    t0 = (lo - origin) * inv
    t1 = (hi - origin) * inv
    t_enter = np.minimum(t0, t1).max(axis=1)
    t_exit = np.maximum(t0, t1).min(axis=1)
    t = np.full(dirs.shape[0], np.inf)
    t_sel = np.where(t_enter > _RAY_NEAR, t_enter, t_exit)
    valid = (t_enter <= t_exit) & (t_sel > _RAY_NEAR)
    t[valid] = t_sel[valid]
    return t


def _intersect_plane(origin, dirs, obj: SceneObject) -> np.ndarray:
    axis = int(np.flatnonzero(obj.size == 0)[0])
    others = [i for i in range(3) if i != axis]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (obj.position[axis] - origin[axis]) / dirs[:, axis]
        p = origin[None, others] + t[:, None] * dirs[:, others]
        inside = np.all(np.abs(p - obj.position[others]) <= obj.size[others] / 2.0, axis=1)
    valid = np.isfinite(t) & (t > _RAY_NEAR) & inside
    out = np.full(dirs.shape[0], np.inf)
    out[valid] = t[valid]
    return out


def _pixel_rect(obj: SceneObject, pose: Pose, intrinsics: Intrinsics):
    """Conservative image-space rectangle covering an object's projection.

    Returns (u0, u1, v0, v1) half-open pixel bounds, None when the object
    is fully behind the camera, or "all" when it straddles the camera
    plane (projected corner envelope is not valid there).
    """
    lo, hi = _object_aabb(obj)
    corners = np.array(
        [[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])]
    )
    cam = (corners - pose.translation) @ pose.rotation
    z = cam[:, 2]
    if np.all(z <= _RAY_NEAR):
        return None
    if np.any(z <= _RAY_NEAR):
        return "all"
    u = intrinsics.fx * cam[:, 0] / z + intrinsics.cx
    v = intrinsics.fy * cam[:, 1] / z + intrinsics.cy
    u0 = max(0, int(np.floor(u.min())))
    u1 = min(intrinsics.width, int(np.ceil(u.max())) + 1)
    v0 = max(0, int(np.floor(v.min())))
    v1 = min(intrinsics.height, int(np.ceil(v.max())) + 1)
    if u0 >= u1 or v0 >= v1:
        return None
    return u0, u1, v0, v1


def render_depth(scene: Scene, pose: Pose, intrinsics: Intrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Planar depth map plus nearest-hit object ids (-1 for background)."""
    shape = (intrinsics.height, intrinsics.width)
    origin, dirs = _pixel_rays(pose, intrinsics)
    dirs = dirs.reshape(shape + (3,))
    best_t = np.full(shape, np.inf)
    best_id = np.full(shape, BACKGROUND_ID, dtype=np.int32)
    for oid, obj in enumerate(scene.objects):
        rect = _pixel_rect(obj, pose, intrinsics)
        if rect is None:
            continue
        if rect == "all":
            u0, u1, v0, v1 = 0, intrinsics.width, 0, intrinsics.height
        else:
            u0, u1, v0, v1 = rect
        sub = dirs[v0:v1, u0:u1].reshape(-1, 3)
        if obj.shape == "sphere":
            t = _intersect_sphere(origin, sub, obj.position, obj.size[0])
        elif obj.shape == "box":
            lo, hi = _object_aabb(obj)
            t = _intersect_box(origin, sub, lo, hi)
        else:
            t = _intersect_plane(origin, sub, obj)
        t = t.reshape(v1 - v0, u1 - u0)
        window_t = best_t[v0:v1, u0:u1]
        closer = t < window_t
        window_t[closer] = t[closer]
        best_id[v0:v1, u0:u1][closer] = oid
    depth = np.where(np.isfinite(best_t), best_t, DEPTH_INVALID)
    return depth, best_id


def object_palette(count: int) -> np.ndarray:
    """Deterministic false-color palette, one row per object id."""
    colors = np.zeros((count, 3), dtype=np.uint8)
    for i in range(count):
        r, g, b = colorsys.hsv_to_rgb((i * 0.61803398875) % 1.0, 0.65, 0.95)
        colors[i] = (int(r * 255), int(g * 255), int(b * 255))
    return colors


def render_rgb(object_ids: np.ndarray, object_count: int) -> np.ndarray:
    palette = np.vstack([object_palette(object_count), np.array([[40, 40, 40]], dtype=np.uint8)])
    return palette[np.where(object_ids >= 0, object_ids, object_count)]


def make_frame(scene: Scene, pose: Pose, intrinsics: Intrinsics, timestamp: float) -> CameraFrame:
    depth, ids = render_depth(scene, pose, intrinsics)
    return CameraFrame(
        rgb=render_rgb(ids, len(scene.objects)),
        depth=depth,
        intrinsics=intrinsics,
        pose=pose,
        timestamp=timestamp,
        object_ids=ids,
    )


# --- trajectories --------------------------------------------------------


@dataclass
class Trajectory:
    """Time-ordered pose samples; times strictly increasing."""

    samples: list[tuple[float, Pose]]

    def __post_init__(self):
        times = [t for t, _ in self.samples]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("trajectory times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.samples)

    def to_json(self) -> dict:
        return {
            "type": "poses",
            "samples": [{"t": t, **pose.to_json()} for t, pose in self.samples],
        }


def orbit_trajectory(
    center,
    radius: float,
    count: int = 120,
    duration: float = 60.0,
    sweeps: int = 2,
    revolutions: float = 6.0,
    polar_min: float = -0.95,
    polar_max: float = 0.95,
) -> Trajectory:
    """Spherical spiral around ``center`` that looks at it from all sides.

    The polar coordinate sweeps polar_min -> polar_max and back ``sweeps``
    times (triangle wave) while the azimuth winds continuously, so every
    viewing direction is revisited even if early coverage is discarded by
    sphere merges.
    """
    center = np.asarray(center, dtype=np.float64)
    samples = []
    for i in range(count):
        s = i / (count - 1) if count > 1 else 0.0
        tri = sweeps * s % 2.0
        tri = tri if tri <= 1.0 else 2.0 - tri
        h = polar_min + (polar_max - polar_min) * tri
        az = 2.0 * math.pi * revolutions * sweeps * s
        ring = math.sqrt(max(0.0, 1.0 - h * h))
        offset = np.array([ring * math.cos(az), h, ring * math.sin(az)])
        samples.append((duration * s, Pose.look_at(center + radius * offset, center)))
    return Trajectory(samples)


def load_trajectory(path) -> Trajectory:
    with open(path) as f:
        data = json.load(f)
    return trajectory_from_json(data)


def trajectory_from_json(data: dict) -> Trajectory:
    kind = data.get("type", "poses")
    if kind == "orbit":
        return orbit_trajectory(
            center=data["center"],
            radius=float(data["radius"]),
            count=int(data.get("count", 120)),
            duration=float(data.get("duration", 60.0)),
            sweeps=int(data.get("sweeps", 2)),
            revolutions=float(data.get("revolutions", 6.0)),
            polar_min=float(data.get("polar_min", -0.95)),
            polar_max=float(data.get("polar_max", 0.95)),
        )
    if kind == "poses":
        samples = []
        for row in data["samples"]:
            if "look_at" in row:
                pose = Pose.look_at(row["position"], row["look_at"])
            else:
                pose = Pose.from_json(row)
            samples.append((float(row["t"]), pose))
        return Trajectory(samples)
    raise ValueError(f"unknown trajectory type {kind!r}")


def load_bundled_trajectory(name: str) -> Trajectory:
    text = resources.files("viewguide.data").joinpath(f"trajectories/{name}.json").read_text()
    return trajectory_from_json(json.loads(text))


# --- playback and datasets ------------------------------------------------


class DatasetRecorder:
    """Writes accepted frames as image + depth + pose JSON under a directory."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.entries: list[dict] = []

    def record(self, frame: CameraFrame, index: int, is_keyframe: bool):
        from PIL import Image

        stem = f"frame_{index:06d}"
        Image.fromarray(frame.rgb).save(self.directory / f"{stem}.png")
        np.save(self.directory / f"{stem}_depth.npy", frame.depth.astype(np.float32))
        meta = {
            "index": index,
            "t": frame.timestamp,
            "keyframe": is_keyframe,
            "intrinsics": frame.intrinsics.to_json(),
            "pose": frame.pose.to_json(),
        }
        (self.directory / f"{stem}.json").write_text(json.dumps(meta, indent=1, sort_keys=True))
        self.entries.append(meta)

    def finalize(self, extra: dict | None = None):
        index = {"frames": self.entries, **(extra or {})}
        (self.directory / "index.json").write_text(json.dumps(index, indent=1, sort_keys=True))


def load_dataset(directory) -> Iterator[CameraFrame]:
    """Iterate a recorded dataset back as frames (no object-id channel)."""
    directory = Path(directory)
    from PIL import Image

    index = json.loads((directory / "index.json").read_text())
    for meta in index["frames"]:
        stem = f"frame_{meta['index']:06d}"
        rgb = np.asarray(Image.open(directory / f"{stem}.png"))
        depth = np.load(directory / f"{stem}_depth.npy").astype(np.float64)
        yield CameraFrame(
            rgb=rgb,
            depth=depth,
            intrinsics=Intrinsics.from_json(meta["intrinsics"]),
            pose=Pose.from_json(meta["pose"]),
            timestamp=float(meta["t"]),
        )


def run_trajectory(
    scene: Scene,
    trajectory: Trajectory,
    session: "CaptureSession",
    recorder: DatasetRecorder | None = None,
    intrinsics: Intrinsics | None = None,
) -> list[dict]:
    """Render and ingest every trajectory sample; returns all session events."""
    if intrinsics is None:
        intrinsics = intrinsics_from_fov(
            session.config.processing_width, session.config.processing_height
        )
    for t, pose in trajectory.samples:
        p = pose.translation
        if np.any(p < scene.bounds_min) or np.any(p > scene.bounds_max):
            raise ValueError(f"trajectory pose at t={t} leaves scene bounds")
    events: list[dict] = []
    for t, pose in trajectory.samples:
        frame = make_frame(scene, pose, intrinsics, t)
        frame_events = session.ingest(frame, t)
        events.extend(frame_events)
        if recorder is not None:
            for ev in frame_events:
                if ev["type"] == "frame_accepted":
                    recorder.record(frame, ev["frame_index"], ev["is_keyframe"])
    if recorder is not None:
        recorder.finalize({"scene": scene.name or None})
    return events


def sample_ground_truth(scene: Scene, count: int, seed: int) -> list[Pose]:
    """Independent evaluation viewpoints: uniform positions in the scene's
    free-space region, each looking at a uniformly sampled target point."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    lo = scene.free_space_min if scene.free_space_min is not None else scene.bounds_min
    hi = scene.free_space_max if scene.free_space_max is not None else scene.bounds_max
    tlo = scene.coverage_region_min if scene.coverage_region_min is not None else scene.bounds_min
    thi = scene.coverage_region_max if scene.coverage_region_max is not None else scene.bounds_max
    poses = []
    while len(poses) < count:
        position = rng.uniform(lo, hi)
        target = rng.uniform(tlo, thi)
        if np.linalg.norm(target - position) < 1e-9:
            continue
        poses.append(Pose.look_at(position, target))
    return poses
