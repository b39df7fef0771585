"""Capture-session orchestration.

A session owns the single mutable copy of guidance state: the frame and
keyframe logs, live sphere proxies, and the occupancy grid. Frames are
accepted on a 0.2 s cadence and every 5 s the accepted frame is also a
keyframe, which runs detection -> scoring -> sphere generation -> merge.
All cadence decisions use event time, never the wall clock, so replays
are bit-for-bit deterministic.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import spheres as sphere_ops
from .detection import Detector
from .geometry import CameraFrame, Intrinsics, Pose, ViewFrustum, resize_frame
from .occupancy import OccupancyGrid
from .scoring import PriorTable, UnknownCategoryError, is_complex, load_default_table
from .spheres import SphereProxy

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"VGSNAP01"

# Cadence comparisons tolerate float accumulation in timestamp streams.
_CADENCE_EPS = 1e-9


class FrameOrderingError(ValueError):
    """Raised when a frame arrives with a timestamp earlier than the clock."""


class SnapshotFormatError(ValueError):
    """Raised when restoring from a corrupt or truncated snapshot."""


@dataclass(frozen=True)
class SessionConfig:
    capture_interval: float = 0.2
    keyframe_interval: float = 5.0
    processing_width: int = 480
    processing_height: int = 360
    sphere_scale: float = 0.75
    subsurface_count: int = 32
    sphere_radius_cap: float = 1.0
    merge_mode: str = sphere_ops.MERGE_MIDPOINT
    score_threshold: float = 60.0
    confidence_threshold: float = 0.5
    depth_tolerance: float = 0.05
    voxel_size: float = 0.10
    grid_min: tuple[float, float, float] = (-3.0, -3.0, -3.0)
    grid_max: tuple[float, float, float] = (3.0, 3.0, 3.0)
    coverage_region_min: tuple[float, float, float] | None = None
    coverage_region_max: tuple[float, float, float] | None = None
    integration_stride: int = 4
    max_carve_range: float = 8.0
    frustum_near: float = 0.05
    frustum_far: float = 20.0
    seed: int = 0

    def with_overrides(self, overrides: dict) -> "SessionConfig":
        unknown = set(overrides) - set(asdict(self))
        if unknown:
            raise ValueError(f"unknown session config keys: {sorted(unknown)}")
        coerced = {
            k: tuple(v) if isinstance(v, list) else v for k, v in overrides.items()
        }
        return replace(self, **coerced)

    def to_json(self) -> dict:
        data = asdict(self)
        for key in ("grid_min", "grid_max", "coverage_region_min", "coverage_region_max"):
            if data[key] is not None:
                data[key] = [float(v) for v in data[key]]
        return data

    @classmethod
    def from_json(cls, data: dict) -> "SessionConfig":
        return cls().with_overrides(data)


@dataclass(frozen=True)
class FrameRecord:
    index: int
    timestamp: float
    pose: Pose
    intrinsics: Intrinsics
    is_keyframe: bool

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "t": self.timestamp,
            "keyframe": self.is_keyframe,
            "pose": self.pose.to_json(),
            "intrinsics": self.intrinsics.to_json(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "FrameRecord":
        return cls(
            index=int(data["index"]),
            timestamp=float(data["t"]),
            pose=Pose.from_json(data["pose"]),
            intrinsics=Intrinsics.from_json(data["intrinsics"]),
            is_keyframe=bool(data["keyframe"]),
        )


@dataclass(frozen=True)
class SphereSummary:
    sphere_id: str
    category: str
    covered: int
    total: int


@dataclass(frozen=True)
class CompletionStatus:
    remaining_subsurfaces: int
    unobserved_fraction: float
    spheres: list[SphereSummary] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "remaining_subsurfaces": self.remaining_subsurfaces,
            "unobserved_fraction": self.unobserved_fraction,
            "spheres": [asdict(s) for s in self.spheres],
        }


class CaptureSession:
    """Single-writer guidance state for one capture run."""

    def __init__(
        self,
        config: SessionConfig | None = None,
        detector: Detector | None = None,
        prior_table: PriorTable | None = None,
    ):
        self.config = config or SessionConfig()
        self.detector = detector
        self.prior_table = prior_table or load_default_table()
        self.grid = OccupancyGrid.create(
            self.config.grid_min, self.config.grid_max, self.config.voxel_size
        )
        self.frames: list[FrameRecord] = []
        self.spheres: list[SphereProxy] = []
        self.clock = 0.0
        self.events: list[dict] = []
        self._last_capture: float | None = None
        self._last_keyframe: float | None = None
        self._next_sphere = 1
        self._event_seq = 0

    # --- bookkeeping -------------------------------------------------------

    @property
    def keyframes(self) -> list[FrameRecord]:
        return [f for f in self.frames if f.is_keyframe]

    def _emit(self, kind: str, **payload) -> dict:
        self._event_seq += 1
        event = {"seq": self._event_seq, "type": kind, **payload}
        self.events.append(event)
        return event

    def _coverage_region(self) -> tuple:
        lo = self.config.coverage_region_min or self.config.grid_min
        hi = self.config.coverage_region_max or self.config.grid_max
        return lo, hi

    # --- ingestion ---------------------------------------------------------

    def ingest(self, frame: CameraFrame, t: float) -> list[dict]:
        """Feed one timestamped frame through cadence, coverage, and keyframe
        processing. Returns the events this frame produced (empty when the
        frame falls below the capture cadence)."""
        if t < self.clock - 1e-12:
            raise FrameOrderingError(f"frame at t={t} is older than session clock {self.clock}")
        self.clock = max(self.clock, t)
        if (
            self._last_capture is not None
            and t - self._last_capture < self.config.capture_interval - _CADENCE_EPS
        ):
            return []
        self._last_capture = t
        is_keyframe = (
            self._last_keyframe is None
            or t - self._last_keyframe >= self.config.keyframe_interval - _CADENCE_EPS
        )
        if is_keyframe:
            self._last_keyframe = t
        record = FrameRecord(len(self.frames), t, frame.pose, frame.intrinsics, is_keyframe)
        self.frames.append(record)
        produced = [
            self._emit(
                "frame_accepted", t=t, frame_index=record.index, is_keyframe=is_keyframe
            )
        ]

        self.grid.integrate_frame(
            frame, self.config.integration_stride, self.config.max_carve_range
        )
        frustum = ViewFrustum(
            frame.pose, frame.intrinsics, self.config.frustum_near, self.config.frustum_far
        )
        for i, sphere in enumerate(self.spheres):
            updated, newly = sphere_ops.mark_coverage(sphere, frame.pose, frustum)
            if newly:
                self.spheres[i] = updated
                produced.append(
                    self._emit("coverage_marked", sphere_id=updated.sphere_id, indices=newly)
                )

        if is_keyframe:
            produced.extend(self.process_keyframe(frame))

        status = self.completion_status()
        produced.append(
            self._emit(
                "status",
                remaining_subsurfaces=status.remaining_subsurfaces,
                unobserved_fraction=status.unobserved_fraction,
                grid_rle=self.grid.states_rle(),
            )
        )
        return produced

    def process_keyframe(self, frame: CameraFrame) -> list[dict]:
        """Detection -> scoring gate -> sphere generation -> merge pass.

        Per-detection failures are logged and skipped; a keyframe never
        aborts half way.
        """
        produced: list[dict] = []
        if self.detector is None:
            return produced
        processed = resize_frame(
            frame, self.config.processing_width, self.config.processing_height
        )
        detections = self.detector.detect(processed)
        new_spheres = []
        for det in detections:
            if det.confidence < self.config.confidence_threshold:
                continue
            try:
                if not is_complex(det.category, self.prior_table, self.config.score_threshold):
                    continue
                sphere = sphere_ops.generate_sphere(
                    det,
                    processed,
                    scale=self.config.sphere_scale,
                    subsurface_count=self.config.subsurface_count,
                    sphere_id=f"s{self._next_sphere:04d}",
                    created_at=frame.timestamp,
                )
            except UnknownCategoryError:
                logger.warning("skipping detection with unknown category %r", det.category)
                continue
            except ValueError as exc:
                logger.warning("skipping %r detection: %s", det.category, exc)
                continue
            self._next_sphere += 1
            new_spheres.append(sphere)
            produced.append(self._emit("sphere_added", sphere=sphere.to_json()))
        if new_spheres:
            merged, merge_events = sphere_ops.merge_pass(
                self.spheres + new_spheres,
                self.config.sphere_radius_cap,
                self.config.merge_mode,
            )
            self.spheres = merged
            for ev in merge_events:
                produced.append(
                    self._emit(
                        "spheres_merged",
                        removed=ev["removed"],
                        sphere=ev["result"].to_json(),
                    )
                )
        return produced

    # --- status ------------------------------------------------------------

    def completion_status(self) -> CompletionStatus:
        lo, hi = self._coverage_region()
        return CompletionStatus(
            remaining_subsurfaces=sum(s.uncovered_count for s in self.spheres),
            unobserved_fraction=self.grid.unobserved_fraction(lo, hi),
            spheres=[
                SphereSummary(s.sphere_id, s.category, s.covered_count, s.subsurface_count)
                for s in self.spheres
            ],
        )

    # --- persistence -------------------------------------------------------

    def snapshot(self) -> bytes:
        """Serialize to a versioned container: magic, manifest length,
        JSON manifest, raw voxel states."""
        manifest = {
            "version": 1,
            "config": self.config.to_json(),
            "clock": self.clock,
            "last_capture": self._last_capture,
            "last_keyframe": self._last_keyframe,
            "next_sphere": self._next_sphere,
            "event_seq": self._event_seq,
            "frames": [f.to_json() for f in self.frames],
            "spheres": [s.to_json() for s in self.spheres],
            "grid": self.grid.meta(),
        }
        blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
        return SNAPSHOT_MAGIC + struct.pack(">Q", len(blob)) + blob + self.grid.state_bytes()

    @classmethod
    def restore(
        cls,
        data: bytes,
        detector: Detector | None = None,
        prior_table: PriorTable | None = None,
    ) -> "CaptureSession":
        header = len(SNAPSHOT_MAGIC) + 8
        if len(data) < header or data[: len(SNAPSHOT_MAGIC)] != SNAPSHOT_MAGIC:
            raise SnapshotFormatError("not a session snapshot")
        (manifest_len,) = struct.unpack(">Q", data[len(SNAPSHOT_MAGIC) : header])
        if len(data) < header + manifest_len:
            raise SnapshotFormatError("truncated snapshot manifest")
        try:
            manifest = json.loads(data[header : header + manifest_len])
        except json.JSONDecodeError as exc:
            raise SnapshotFormatError(f"corrupt manifest: {exc}") from exc
        if manifest.get("version") != 1:
            raise SnapshotFormatError(f"unsupported snapshot version {manifest.get('version')}")
        session = cls(
            SessionConfig.from_json(manifest["config"]),
            detector=detector,
            prior_table=prior_table,
        )
        grid_meta = manifest["grid"]
        expected = int(np.prod(grid_meta["dims"]))
        blob = data[header + manifest_len :]
        if len(blob) != expected:
            raise SnapshotFormatError(f"grid payload is {len(blob)} bytes, expected {expected}")
        session.grid = OccupancyGrid.from_bytes(grid_meta, blob)
        session.clock = float(manifest["clock"])
        session._last_capture = manifest["last_capture"]
        session._last_keyframe = manifest["last_keyframe"]
        session._next_sphere = int(manifest["next_sphere"])
        session._event_seq = int(manifest["event_seq"])
        session.frames = [FrameRecord.from_json(f) for f in manifest["frames"]]
        session.spheres = [SphereProxy.from_json(s) for s in manifest["spheres"]]
        return session
