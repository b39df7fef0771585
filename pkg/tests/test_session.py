import numpy as np
import pytest

from conftest import blank_frame
from viewguide.detection import SyntheticDetector
from viewguide.geometry import Pose, intrinsics_from_fov
from viewguide.session import (
    CaptureSession,
    FrameOrderingError,
    SessionConfig,
    SnapshotFormatError,
)
from viewguide.simulator import Scene, SceneObject, make_frame


def tiny_config(**overrides) -> SessionConfig:
    base = dict(
        processing_width=32,
        processing_height=24,
        grid_min=(-1.0, -1.0, -1.0),
        grid_max=(1.0, 1.0, 1.0),
        voxel_size=0.25,
        max_carve_range=2.0,
    )
    base.update(overrides)
    return SessionConfig(**base)


def tiny_frame(t: float, depth: float = 0.0):
    return blank_frame(intrinsics_from_fov(32, 24), Pose.identity(), t, depth_value=depth)


class TestCadence:
    def test_capture_interval_filters_frames(self):
        session = CaptureSession(tiny_config())
        for t in (0.0, 0.1, 0.2):
            session.ingest(tiny_frame(t), t)
        assert [f.timestamp for f in session.frames] == [0.0, 0.2]

    def test_keyframe_count_oracle_10s(self):
        # Counting oracle applied independently to the cadence rules.
        session = CaptureSession(tiny_config())
        times = [i / 10 for i in range(101)]
        for t in times:
            session.ingest(tiny_frame(t), t)
        last_cap = None
        last_kf = None
        expected_frames = 0
        expected_keyframes = 0
        for t in times:
            if last_cap is None or t - last_cap >= 0.2 - 1e-9:
                last_cap = t
                expected_frames += 1
                if last_kf is None or t - last_kf >= 5.0 - 1e-9:
                    last_kf = t
                    expected_keyframes += 1
        assert expected_keyframes == 3  # t = 0, 5, 10
        assert len(session.frames) == expected_frames
        assert len(session.keyframes) == expected_keyframes
        assert [f.timestamp for f in session.keyframes] == [0.0, 5.0, 10.0]

    def test_out_of_order_rejected(self):
        session = CaptureSession(tiny_config())
        session.ingest(tiny_frame(1.0), 1.0)
        with pytest.raises(FrameOrderingError):
            session.ingest(tiny_frame(0.5), 0.5)

    def test_skipped_frame_returns_no_events_but_advances_clock(self):
        session = CaptureSession(tiny_config())
        assert session.ingest(tiny_frame(0.0), 0.0)
        assert session.ingest(tiny_frame(0.05), 0.05) == []
        assert session.clock == 0.05

    def test_keyframes_subset_of_frames(self):
        session = CaptureSession(tiny_config())
        for i in range(40):
            session.ingest(tiny_frame(i * 0.3), i * 0.3)
        frame_ids = {f.index for f in session.frames}
        assert all(k.index in frame_ids for k in session.keyframes)


def single_vase_scene() -> Scene:
    return Scene(
        objects=[
            SceneObject("plane", [0, -1, 0], [8, 0, 8], "floor"),
            SceneObject("sphere", [0, 0, 0], [0.25], "vase"),
        ],
        bounds_min=[-5, -5, -5],
        bounds_max=[5, 5, 5],
    )


def desk_only_scene() -> Scene:
    return Scene(
        objects=[SceneObject("box", [0, -0.5, 0], [1.2, 0.7, 0.8], "desk")],
        bounds_min=[-5, -5, -5],
        bounds_max=[5, 5, 5],
    )


def scene_session(scene: Scene, **overrides) -> CaptureSession:
    config = tiny_config(
        processing_width=96,
        processing_height=72,
        grid_min=(-2.0, -2.0, -2.0),
        grid_max=(2.0, 2.0, 2.0),
        **overrides,
    )
    return CaptureSession(config, SyntheticDetector(scene))


def scene_frame(scene: Scene, position, t: float, target=(0, 0, 0)):
    intr = intrinsics_from_fov(96, 72)
    return make_frame(scene, Pose.look_at(position, target), intr, t)


class TestProcessKeyframe:
    def test_single_complex_object_spawns_one_sphere(self):
        scene = single_vase_scene()
        session = scene_session(scene)
        session.ingest(scene_frame(scene, [2.0, 0.3, 0.0], 0.0), 0.0)
        assert len(session.spheres) == 1
        assert session.spheres[0].category == "vase"
        assert session.spheres[0].sphere_id == "s0001"

    def test_non_complex_objects_spawn_nothing(self):
        scene = desk_only_scene()
        session = scene_session(scene)
        session.ingest(scene_frame(scene, [2.5, 0.5, 0.0], 0.0, target=(0, -0.5, 0)), 0.0)
        assert session.spheres == []

    def test_second_view_of_same_object_collapses_to_one(self):
        scene = single_vase_scene()
        session = scene_session(scene)
        session.ingest(scene_frame(scene, [2.0, 0.3, 0.0], 0.0), 0.0)
        session.ingest(scene_frame(scene, [0.0, 0.4, 2.0], 5.0), 5.0)
        assert len(session.spheres) == 1

    def test_low_confidence_detections_skipped(self):
        scene = single_vase_scene()

        class Doubtful(SyntheticDetector):
            def detect(self, frame):
                detections = super().detect(frame)
                return [
                    type(d)(bbox=d.bbox, mask=d.mask, category=d.category, confidence=0.1)
                    for d in detections
                ]

        config = tiny_config(
            processing_width=96,
            processing_height=72,
            grid_min=(-2.0, -2.0, -2.0),
            grid_max=(2.0, 2.0, 2.0),
        )
        session = CaptureSession(config, Doubtful(scene))
        session.ingest(scene_frame(scene, [2.0, 0.3, 0.0], 0.0), 0.0)
        assert session.spheres == []

    def test_unknown_category_skipped_not_fatal(self):
        scene = Scene(
            objects=[SceneObject("sphere", [0, 0, 0], [0.25], "mystery")],
            bounds_min=[-5, -5, -5],
            bounds_max=[5, 5, 5],
        )
        session = scene_session(scene)
        session.ingest(scene_frame(scene, [2.0, 0.3, 0.0], 0.0), 0.0)
        assert session.spheres == []
        assert len(session.frames) == 1

    def test_new_spheres_marked_from_next_frame(self):
        scene = single_vase_scene()
        session = scene_session(scene)
        session.ingest(scene_frame(scene, [1.5, 0.2, 0.0], 0.0), 0.0)
        assert session.spheres[0].covered_count == 0
        session.ingest(scene_frame(scene, [1.5, 0.2, 0.2], 0.25), 0.25)
        assert session.spheres[0].covered_count == 1


class TestCompletionStatus:
    def test_fresh_session(self):
        session = CaptureSession(tiny_config())
        status = session.completion_status()
        assert status.remaining_subsurfaces == 0
        assert status.unobserved_fraction == 1.0
        assert status.spheres == []

    def test_counts_uncovered(self):
        scene = single_vase_scene()
        session = scene_session(scene, subsurface_count=32)
        session.ingest(scene_frame(scene, [1.5, 0.2, 0.0], 0.0), 0.0)
        sphere = session.spheres[0]
        session.spheres[0] = sphere.with_covered(range(30))
        status = session.completion_status()
        assert status.remaining_subsurfaces == 2
        assert status.spheres[0].covered == 30


class TestSnapshot:
    def test_fresh_round_trip(self):
        session = CaptureSession(tiny_config())
        data = session.snapshot()
        restored = CaptureSession.restore(data)
        assert restored.snapshot() == data

    def test_mid_session_round_trip(self, desk_run):
        session = desk_run["session"]
        data = desk_run["snapshot"]
        restored = CaptureSession.restore(data)
        assert restored.snapshot() == data
        assert [s.sphere_id for s in restored.spheres] == [s.sphere_id for s in session.spheres]
        for a, b in zip(restored.spheres, session.spheres):
            np.testing.assert_array_equal(a.covered, b.covered)
        np.testing.assert_array_equal(restored.grid.states, session.grid.states)
        assert restored.clock == session.clock
        assert len(restored.frames) == len(session.frames)

    def test_truncated_rejected(self):
        session = CaptureSession(tiny_config())
        data = session.snapshot()
        with pytest.raises(SnapshotFormatError):
            CaptureSession.restore(data[: len(data) // 2])

    def test_bad_magic_rejected(self):
        with pytest.raises(SnapshotFormatError):
            CaptureSession.restore(b"NOTASNAP" + b"\x00" * 32)

    def test_deterministic_replay(self):
        def run():
            scene = single_vase_scene()
            session = scene_session(scene)
            for i in range(12):
                t = i * 0.4
                session.ingest(scene_frame(scene, [1.6, 0.1 * i - 0.4, 0.3], t), t)
            return session.snapshot()

        assert run() == run()


class TestEventLog:
    def test_remaining_only_increases_at_keyframes(self, desk_run):
        remaining = None
        keyframe = False
        for event in desk_run["events"]:
            if event["type"] == "frame_accepted":
                keyframe = event["is_keyframe"]
            elif event["type"] == "status":
                if remaining is not None and event["remaining_subsurfaces"] > remaining:
                    assert keyframe, "remaining subsurfaces grew outside a keyframe"
                remaining = event["remaining_subsurfaces"]

    def test_event_seq_strictly_increasing(self, desk_run):
        seqs = [e["seq"] for e in desk_run["events"]]
        assert all(b > a for a, b in zip(seqs, seqs[1:]))

    def test_config_overrides_unknown_key_rejected(self):
        with pytest.raises(ValueError):
            SessionConfig().with_overrides({"sphere_scales": 1.0})
