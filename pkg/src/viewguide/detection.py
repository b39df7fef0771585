"""Detection records, the detector seam, and object depth estimation.

A real deployment would plug a neural segmentation model in behind the
``Detector`` protocol; the bundled ``SyntheticDetector`` produces exact
detections from simulator ground-truth ids so the rest of the pipeline
can be exercised deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Protocol, runtime_checkable

import numpy as np

from .geometry import CameraFrame
from .simulator import Scene, render_depth

DEFAULT_MIN_PIXELS = 64


class DegenerateDepthError(ValueError):
    """Raised when no valid depth samples survive filtering."""


@dataclass(frozen=True, eq=False)
class Detection:
    """A segmented object instance in one frame.

    ``bbox`` is (u_min, u_max, v_min, v_max) in pixels, inclusive;
    ``mask`` is a boolean image-sized array.
    """

    bbox: tuple[int, int, int, int]
    mask: np.ndarray
    category: str
    confidence: float = 1.0

    def __post_init__(self):
        u_min, u_max, v_min, v_max = self.bbox
        if u_min > u_max or v_min > v_max:
            raise ValueError(f"malformed bbox {self.bbox}")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        rows, cols = np.nonzero(self.mask)
        if rows.size == 0:
            raise ValueError("empty detection mask")
        if cols.min() < u_min or cols.max() > u_max or rows.min() < v_min or rows.max() > v_max:
            raise ValueError("mask pixels fall outside bbox")

    @property
    def pixel_count(self) -> int:
        return int(np.count_nonzero(self.mask))

    def centroid(self) -> tuple[float, float]:
        """Mean (u, v) of the mask pixels."""
        rows, cols = np.nonzero(self.mask)
        return float(cols.mean()), float(rows.mean())

    def to_json(self) -> dict:
        return {
            "bbox": [int(v) for v in self.bbox],
            "category": self.category,
            "confidence": float(self.confidence),
            "mask_rle": encode_mask_rle(self.mask),
        }

    @classmethod
    def from_json(cls, data: dict, width: int, height: int) -> "Detection":
        return cls(
            bbox=tuple(int(v) for v in data["bbox"]),
            mask=decode_mask_rle(data["mask_rle"], width, height),
            category=data["category"],
            confidence=float(data["confidence"]),
        )


@runtime_checkable
class Detector(Protocol):
    def detect(self, frame: CameraFrame) -> list[Detection]: ...


def detect_synthetic(
    frame: CameraFrame, scene: Scene, min_pixels: int = DEFAULT_MIN_PIXELS
) -> list[Detection]:
    """Exact detections from ground truth: one per scene object with at
    least ``min_pixels`` visible (unoccluded, in-frustum) pixels."""
    ids = frame.object_ids
    if ids is None:
        _, ids = render_depth(scene, frame.pose, frame.intrinsics)
    detections = []
    for oid in np.unique(ids):
        if oid < 0:
            continue
        mask = ids == oid
        if np.count_nonzero(mask) < min_pixels:
            continue
        rows, cols = np.nonzero(mask)
        detections.append(
            Detection(
                bbox=(int(cols.min()), int(cols.max()), int(rows.min()), int(rows.max())),
                mask=mask,
                category=scene.objects[int(oid)].category,
                confidence=1.0,
            )
        )
    return detections


class SyntheticDetector:
    """Detector-protocol wrapper around :func:`detect_synthetic`."""

    def __init__(self, scene: Scene, min_pixels: int = DEFAULT_MIN_PIXELS):
        self.scene = scene
        self.min_pixels = min_pixels

    def detect(self, frame: CameraFrame) -> list[Detection]:
        return detect_synthetic(frame, self.scene, self.min_pixels)


def object_depth(mask: np.ndarray, depth: np.ndarray) -> float:
    """Mean depth over the mask after discarding outliers.

    Samples outside median +- 3*MAD are dropped (robust, parameter-free);
    non-positive or non-finite depths are treated as invalid up front.
    """
    samples = np.asarray(depth)[np.asarray(mask, dtype=bool)]
    samples = samples[np.isfinite(samples) & (samples > 0)]
    if samples.size == 0:
        raise DegenerateDepthError("no valid depth samples under the mask")
    median = np.median(samples)
    mad = np.median(np.abs(samples - median))
    kept = samples[np.abs(samples - median) <= 3.0 * mad]
    if kept.size == 0:
        raise DegenerateDepthError("all depth samples rejected as outliers")
    return float(kept.mean())


def encode_mask_rle(mask: np.ndarray) -> str:
    """Run-length encode a boolean mask, row-major, zero run first."""
    flat = np.asarray(mask, dtype=bool).reshape(-1)
    if flat.size == 0:
        return ""
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate([[0], changes, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs = [0] + runs
    return ",".join(str(r) for r in runs)


def decode_mask_rle(rle: str, width: int, height: int) -> np.ndarray:
    counts = [int(c) for c in rle.split(",")] if rle else []
    values = np.resize([False, True], len(counts))
    flat = np.repeat(values, counts)
    if flat.size != width * height:
        raise ValueError(f"RLE decodes to {flat.size} pixels, expected {width * height}")
    return flat.reshape(height, width)


def load_vocabulary(path=None) -> list[str]:
    """The closed category vocabulary, one label per line."""
    if path is None:
        text = resources.files("viewguide.data").joinpath("vocabulary.txt").read_text()
    else:
        with open(path) as f:
            text = f.read()
    return [line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")]
