"""Viewpoint-coverage evaluation.

Compares a collected (training) pose set against independently sampled
ground-truth viewpoints: for every ground-truth view, how far away is the
nearest training view, and how different is its orientation. Small values
mean the collection sampled the scene diversely enough to have a view
near any fair test viewpoint.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .geometry import Pose

if TYPE_CHECKING:
    from .session import CaptureSession

POSE_CONVENTION = "world: right-handed y-up; camera: x-right y-down z-forward"

LABEL_TRAINING = "training"
LABEL_GROUND_TRUTH = "ground_truth"
LABEL_OTHER = "other"


class DegenerateConfigurationError(ValueError):
    """Raised when correspondences cannot determine a similarity transform."""


@dataclass
class PoseSet:
    poses: list[Pose]
    labels: list[str] = field(default_factory=list)
    scenes: list[str] | None = None
    metric_scale: bool = True
    convention: str = POSE_CONVENTION

    def __post_init__(self):
        if not self.labels:
            self.labels = [LABEL_TRAINING] * len(self.poses)
        if len(self.labels) != len(self.poses):
            raise ValueError("one label per pose required")

    def __len__(self) -> int:
        return len(self.poses)

    def positions(self) -> np.ndarray:
        return np.array([p.translation for p in self.poses]).reshape(-1, 3)

    def with_label(self, label: str) -> "PoseSet":
        keep = [i for i, l in enumerate(self.labels) if l == label]
        return PoseSet(
            poses=[self.poses[i] for i in keep],
            labels=[label] * len(keep),
            scenes=None if self.scenes is None else [self.scenes[i] for i in keep],
            metric_scale=self.metric_scale,
            convention=self.convention,
        )

    def to_json(self) -> dict:
        rows = []
        for i, (pose, label) in enumerate(zip(self.poses, self.labels)):
            row = {"label": label, **pose.to_json()}
            if self.scenes is not None:
                row["scene"] = self.scenes[i]
            rows.append(row)
        return {"metric_scale": self.metric_scale, "convention": self.convention, "poses": rows}

    @classmethod
    def from_json(cls, data: dict) -> "PoseSet":
        rows = data["poses"]
        scenes = [r["scene"] for r in rows] if rows and "scene" in rows[0] else None
        return cls(
            poses=[Pose.from_json(r) for r in rows],
            labels=[r.get("label", LABEL_TRAINING) for r in rows],
            scenes=scenes,
            metric_scale=bool(data.get("metric_scale", True)),
            convention=data.get("convention", POSE_CONVENTION),
        )

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json(), f, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path) -> "PoseSet":
        with open(path) as f:
            return cls.from_json(json.load(f))


def _require_nonempty(train: PoseSet, gt: PoseSet):
    if len(train) == 0 or len(gt) == 0:
        raise ValueError("pose sets must be non-empty")


def nearest_view_distance(train: PoseSet, gt: PoseSet) -> tuple[float, float]:
    """Mean and standard deviation, over ground-truth poses, of the distance
    to the nearest training position (meters)."""
    _require_nonempty(train, gt)
    dists = np.linalg.norm(
        gt.positions()[:, None, :] - train.positions()[None, :, :], axis=-1
    ).min(axis=1)
    return float(dists.mean()), float(dists.std())


def rotation_angle_deg(r_a: np.ndarray, r_b: np.ndarray) -> float:
    """Geodesic angle between two rotation matrices, degrees.

    Uses ``theta = 2 asin(|Ra - Rb|_F / (2 sqrt(2)))``, which is exact at 0
    where the trace/arccos form loses precision.
    """
    diff = np.linalg.norm(r_a - r_b)
    return float(np.degrees(2.0 * np.arcsin(np.clip(diff / (2.0 * np.sqrt(2.0)), 0.0, 1.0))))


def nearest_view_angle(
    train: PoseSet, gt: PoseSet, pairing: str = "nearest_position"
) -> tuple[float, float]:
    """Mean and standard deviation, over ground-truth poses, of the rotation
    angle to a training pose (degrees).

    ``pairing`` selects the training pose per ground-truth view: the
    position-nearest one (default) or the minimum-angle one over the whole
    training set ("min_angle").
    """
    _require_nonempty(train, gt)
    if pairing not in ("nearest_position", "min_angle"):
        raise ValueError(f"unknown pairing {pairing!r}")
    angles = []
    train_positions = train.positions()
    for pose in gt.poses:
        if pairing == "nearest_position":
            i = int(np.argmin(np.linalg.norm(train_positions - pose.translation, axis=1)))
            angles.append(rotation_angle_deg(pose.rotation, train.poses[i].rotation))
        else:
            angles.append(
                min(rotation_angle_deg(pose.rotation, tp.rotation) for tp in train.poses)
            )
    angles = np.asarray(angles)
    return float(angles.mean()), float(angles.std())


@dataclass(frozen=True)
class SimilarityTransform:
    scale: float
    rotation: np.ndarray
    translation: np.ndarray
    residual: float

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.scale * (np.asarray(points) @ self.rotation.T) + self.translation


def align_rigid(
    a: PoseSet, b: PoseSet, correspondences: list[tuple[int, int]] | None = None
) -> SimilarityTransform:
    """Closed-form least-squares similarity transform mapping a onto b.

    ``correspondences`` pairs indices (i_a, i_b); None pairs same indices
    across equal-length sets. Needs at least three non-collinear
    correspondences. A known metric length (the usual scale anchor) can be
    applied by scaling one set before alignment.
    """
    if correspondences is None:
        if len(a) != len(b):
            raise ValueError("sets differ in length; explicit correspondences required")
        correspondences = [(i, i) for i in range(len(a))]
    if len(correspondences) < 3:
        raise DegenerateConfigurationError("need at least 3 correspondences")
    pa = a.positions()[[i for i, _ in correspondences]]
    pb = b.positions()[[j for _, j in correspondences]]
    mean_a = pa.mean(axis=0)
    mean_b = pb.mean(axis=0)
    ca = pa - mean_a
    cb = pb - mean_b
    cov = cb.T @ ca / len(correspondences)
    u, s, vt = np.linalg.svd(cov)
    if s[1] < 1e-12 * max(s[0], 1e-300):
        raise DegenerateConfigurationError("correspondences are collinear")
    d = np.sign(np.linalg.det(u @ vt))
    diag = np.diag([1.0, 1.0, d])
    rotation = u @ diag @ vt
    var_a = (ca**2).sum() / len(correspondences)
    if var_a < 1e-24:
        raise DegenerateConfigurationError("zero spread in source correspondences")
    scale = float(np.trace(np.diag(s) @ diag) / var_a)
    translation = mean_b - scale * rotation @ mean_a
    mapped = scale * (pa @ rotation.T) + translation
    residual = float(np.sqrt(((mapped - pb) ** 2).sum(axis=1).mean()))
    return SimilarityTransform(scale, rotation, translation, residual)


def viewpoint_statistics(train: PoseSet, gt: PoseSet, pairing: str = "nearest_position") -> dict:
    """Distance/angle statistics, pooled and per scene when scene labels exist."""
    pooled = {
        "distance_m": _stat_pair(nearest_view_distance(train, gt)),
        "angle_deg": _stat_pair(nearest_view_angle(train, gt, pairing)),
        "train_count": len(train),
        "ground_truth_count": len(gt),
    }
    report = {"pooled": pooled}
    if train.scenes and gt.scenes:
        per_scene = {}
        for scene in sorted(set(gt.scenes)):
            t_idx = [i for i, s in enumerate(train.scenes) if s == scene]
            g_idx = [i for i, s in enumerate(gt.scenes) if s == scene]
            if not t_idx or not g_idx:
                continue
            t = PoseSet([train.poses[i] for i in t_idx], [train.labels[i] for i in t_idx])
            g = PoseSet([gt.poses[i] for i in g_idx], [gt.labels[i] for i in g_idx])
            per_scene[scene] = {
                "distance_m": _stat_pair(nearest_view_distance(t, g)),
                "angle_deg": _stat_pair(nearest_view_angle(t, g, pairing)),
            }
        if per_scene:
            report["per_scene"] = per_scene
            report["scene_averaged"] = {
                key: {
                    "mean": float(np.mean([v[key]["mean"] for v in per_scene.values()])),
                    "sd": float(np.mean([v[key]["sd"] for v in per_scene.values()])),
                }
                for key in ("distance_m", "angle_deg")
            }
    return report


def _stat_pair(pair: tuple[float, float]) -> dict:
    return {"mean": pair[0], "sd": pair[1]}


def coverage_report(session: "CaptureSession") -> dict:
    """Machine-readable session summary: counts, per-sphere coverage, grid
    completeness."""
    status = session.completion_status()
    per_category: dict[str, dict] = {}
    for summary in status.spheres:
        entry = per_category.setdefault(summary.category, {"spheres": 0, "covered": 0, "total": 0})
        entry["spheres"] += 1
        entry["covered"] += summary.covered
        entry["total"] += summary.total
    return {
        "frames": len(session.frames),
        "keyframes": len(session.keyframes),
        "spheres": [
            {
                "id": s.sphere_id,
                "category": s.category,
                "covered": s.covered,
                "total": s.total,
            }
            for s in status.spheres
        ],
        "per_category": per_category,
        "remaining_subsurfaces": status.remaining_subsurfaces,
        "unobserved_fraction": status.unobserved_fraction,
    }


def format_report(report: dict) -> str:
    """Plain-text table for terminal output."""
    lines = [
        f"frames:            {report['frames']}",
        f"keyframes:         {report['keyframes']}",
        f"spheres:           {len(report['spheres'])}",
    ]
    for sphere in report["spheres"]:
        lines.append(
            f"  {sphere['id']} [{sphere['category']}] "
            f"covered {sphere['covered']}/{sphere['total']}"
        )
    lines.append(f"remaining subsurfaces: {report['remaining_subsurfaces']}")
    lines.append(f"unobserved fraction:   {report['unobserved_fraction']:.4f}")
    return "\n".join(lines)
