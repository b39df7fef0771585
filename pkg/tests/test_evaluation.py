import json
import math

import numpy as np
import pytest

from conftest import random_pose, random_rotation
from viewguide.evaluation import (
    LABEL_GROUND_TRUTH,
    DegenerateConfigurationError,
    PoseSet,
    align_rigid,
    coverage_report,
    format_report,
    nearest_view_angle,
    nearest_view_distance,
    rotation_angle_deg,
    viewpoint_statistics,
)
from viewguide.geometry import Pose


def brute_force_distance(train: PoseSet, gt: PoseSet):
    """Naive double-loop oracle for the nearest-position distance stats."""
    per_gt = []
    for g in gt.poses:
        best = math.inf
        for t in train.poses:
            d = math.dist(g.translation, t.translation)
            best = min(best, d)
        per_gt.append(best)
    mean = sum(per_gt) / len(per_gt)
    var = sum((d - mean) ** 2 for d in per_gt) / len(per_gt)
    return mean, math.sqrt(var)


def brute_force_angle(train: PoseSet, gt: PoseSet):
    per_gt = []
    for g in gt.poses:
        best_d = math.inf
        best_angle = None
        for t in train.poses:
            d = math.dist(g.translation, t.translation)
            if d < best_d:
                best_d = d
                diff = 0.0
                for i in range(3):
                    for j in range(3):
                        diff += (g.rotation[i, j] - t.rotation[i, j]) ** 2
                best_angle = math.degrees(2 * math.asin(min(1.0, math.sqrt(diff) / (2 * math.sqrt(2)))))
        per_gt.append(best_angle)
    mean = sum(per_gt) / len(per_gt)
    var = sum((a - mean) ** 2 for a in per_gt) / len(per_gt)
    return mean, math.sqrt(var)


class TestNearestViewDistance:
    def test_identical_sets_zero(self):
        rng = np.random.default_rng(1)
        poses = PoseSet([random_pose(rng) for _ in range(10)])
        assert nearest_view_distance(poses, poses) == (0.0, 0.0)

    def test_constructed_offset(self):
        base = Pose.identity()
        train = PoseSet([base])
        gt = PoseSet([Pose(np.eye(3), np.array([0.3, 0.0, 0.0]))])
        mean, sd = nearest_view_distance(train, gt)
        assert mean == pytest.approx(0.3, abs=1e-15)
        assert sd == 0.0

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            train = PoseSet([random_pose(rng) for _ in range(rng.integers(1, 12))])
            gt = PoseSet([random_pose(rng) for _ in range(rng.integers(1, 12))])
            fast = nearest_view_distance(train, gt)
            slow = brute_force_distance(train, gt)
            assert fast[0] == pytest.approx(slow[0], abs=1e-12)
            assert fast[1] == pytest.approx(slow[1], abs=1e-12)

    def test_adding_training_pose_never_hurts(self):
        rng = np.random.default_rng(3)
        train = [random_pose(rng) for _ in range(5)]
        gt = PoseSet([random_pose(rng) for _ in range(6)])
        before, _ = nearest_view_distance(PoseSet(list(train)), gt)
        train.append(random_pose(rng))
        after, _ = nearest_view_distance(PoseSet(train), gt)
        assert after <= before + 1e-15

    def test_rigid_invariance(self):
        rng = np.random.default_rng(4)
        train = PoseSet([random_pose(rng) for _ in range(6)])
        gt = PoseSet([random_pose(rng) for _ in range(5)])
        r = random_rotation(rng)
        shift = rng.normal(size=3)
        moved_train = PoseSet([Pose(r @ p.rotation, r @ p.translation + shift) for p in train.poses])
        moved_gt = PoseSet([Pose(r @ p.rotation, r @ p.translation + shift) for p in gt.poses])
        a = nearest_view_distance(train, gt)
        b = nearest_view_distance(moved_train, moved_gt)
        assert a[0] == pytest.approx(b[0], rel=1e-9)
        assert a[1] == pytest.approx(b[1], rel=1e-9, abs=1e-12)

    def test_empty_set_rejected(self):
        rng = np.random.default_rng(5)
        poses = PoseSet([random_pose(rng)])
        with pytest.raises(ValueError):
            nearest_view_distance(PoseSet([]), poses)
        with pytest.raises(ValueError):
            nearest_view_distance(poses, PoseSet([]))


class TestNearestViewAngle:
    def test_identical_sets_zero(self):
        rng = np.random.default_rng(6)
        poses = PoseSet([random_pose(rng) for _ in range(8)])
        assert nearest_view_angle(poses, poses) == (0.0, 0.0)

    def test_constructed_yaw(self):
        yaw = math.radians(30)
        r = np.array(
            [
                [math.cos(yaw), 0, math.sin(yaw)],
                [0, 1, 0],
                [-math.sin(yaw), 0, math.cos(yaw)],
            ]
        )
        train = PoseSet([Pose(np.eye(3), np.zeros(3))])
        gt = PoseSet([Pose(r, np.zeros(3))])
        mean, sd = nearest_view_angle(train, gt)
        assert mean == pytest.approx(30.0, rel=1e-9)
        assert sd == 0.0

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            train = PoseSet([random_pose(rng) for _ in range(rng.integers(1, 10))])
            gt = PoseSet([random_pose(rng) for _ in range(rng.integers(1, 10))])
            fast = nearest_view_angle(train, gt)
            slow = brute_force_angle(train, gt)
            assert fast[0] == pytest.approx(slow[0], abs=1e-9)
            assert fast[1] == pytest.approx(slow[1], abs=1e-9)

    def test_min_angle_pairing_never_larger(self):
        rng = np.random.default_rng(8)
        train = PoseSet([random_pose(rng) for _ in range(8)])
        gt = PoseSet([random_pose(rng) for _ in range(6)])
        nearest, _ = nearest_view_angle(train, gt, pairing="nearest_position")
        minimum, _ = nearest_view_angle(train, gt, pairing="min_angle")
        assert minimum <= nearest + 1e-12

    def test_rotation_angle_formula(self):
        # quarter turn about z against identity
        r = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        assert rotation_angle_deg(np.eye(3), r) == pytest.approx(90.0, rel=1e-12)
        assert rotation_angle_deg(r, r) == 0.0


class TestAlignRigid:
    def test_identity(self):
        rng = np.random.default_rng(9)
        a = PoseSet([random_pose(rng) for _ in range(5)])
        transform = align_rigid(a, a)
        assert transform.scale == pytest.approx(1.0, rel=1e-12)
        np.testing.assert_allclose(transform.rotation, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(transform.translation, 0.0, atol=1e-12)
        assert transform.residual < 1e-12

    def test_recovers_constructed_similarity(self):
        rng = np.random.default_rng(10)
        a = PoseSet([random_pose(rng) for _ in range(7)])
        rz = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        shift = np.array([2.0, -1.0, 0.5])
        b = PoseSet([Pose(rz @ p.rotation, 2.0 * (rz @ p.translation) + shift) for p in a.poses])
        st = align_rigid(a, b)
        assert st.scale == pytest.approx(2.0, rel=1e-9)
        np.testing.assert_allclose(st.rotation, rz, atol=1e-9)
        np.testing.assert_allclose(st.translation, shift, atol=1e-9)
        np.testing.assert_allclose(st.apply(a.positions()), b.positions(), atol=1e-9)

    def test_two_correspondences_rejected(self):
        rng = np.random.default_rng(11)
        a = PoseSet([random_pose(rng) for _ in range(2)])
        with pytest.raises(DegenerateConfigurationError):
            align_rigid(a, a)

    def test_collinear_rejected(self):
        poses = [Pose(np.eye(3), np.array([float(i), 0.0, 0.0])) for i in range(4)]
        a = PoseSet(poses)
        with pytest.raises(DegenerateConfigurationError):
            align_rigid(a, a)


class TestPoseSetIO:
    def test_round_trip_with_labels_and_scenes(self, tmp_path):
        rng = np.random.default_rng(12)
        ps = PoseSet(
            [random_pose(rng) for _ in range(4)],
            labels=["training", "training", LABEL_GROUND_TRUTH, "other"],
            scenes=["desk", "desk", "lounge", "lounge"],
        )
        path = tmp_path / "poses.json"
        ps.save(path)
        again = PoseSet.load(path)
        assert again.labels == ps.labels
        assert again.scenes == ps.scenes
        assert again.metric_scale
        np.testing.assert_allclose(again.positions(), ps.positions())

    def test_with_label_filters(self):
        rng = np.random.default_rng(13)
        ps = PoseSet(
            [random_pose(rng) for _ in range(3)],
            labels=["training", LABEL_GROUND_TRUTH, "training"],
        )
        assert len(ps.with_label("training")) == 2
        assert len(ps.with_label(LABEL_GROUND_TRUTH)) == 1


class TestReports:
    def test_viewpoint_statistics_pooled_and_per_scene(self):
        rng = np.random.default_rng(14)
        train = PoseSet(
            [random_pose(rng) for _ in range(8)],
            scenes=["desk"] * 4 + ["lounge"] * 4,
        )
        gt = PoseSet(
            [random_pose(rng) for _ in range(6)],
            scenes=["desk"] * 3 + ["lounge"] * 3,
        )
        stats = viewpoint_statistics(train, gt)
        assert "pooled" in stats and "per_scene" in stats and "scene_averaged" in stats
        assert set(stats["per_scene"]) == {"desk", "lounge"}

    def test_coverage_report_accounting(self, desk_run):
        session = desk_run["session"]
        report = coverage_report(session)
        assert report["frames"] == len(session.frames)
        assert report["keyframes"] == len(session.keyframes)
        assert len(report["spheres"]) == len(session.spheres)
        total_uncovered = sum(s["total"] - s["covered"] for s in report["spheres"])
        assert total_uncovered == report["remaining_subsurfaces"]
        # lossless serialization round trip
        assert json.loads(json.dumps(report)) == report
        text = format_report(report)
        assert "remaining subsurfaces" in text

    def test_fresh_session_report(self):
        from viewguide.session import CaptureSession, SessionConfig

        session = CaptureSession(
            SessionConfig(grid_min=(-1, -1, -1), grid_max=(1, 1, 1), voxel_size=0.5)
        )
        report = coverage_report(session)
        assert report["frames"] == 0
        assert report["spheres"] == []
        assert report["unobserved_fraction"] == 1.0
