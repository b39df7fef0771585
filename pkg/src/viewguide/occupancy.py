"""Occupancy-grid spatial coverage.

Stands in for a device meshing API: depth rays carve free space and mark
surface voxels occupied, and the set of still-unknown voxels drives the
"not yet observed" overlay. Voxel states only ever move forward:
unknown -> free/occupied, free -> occupied.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .geometry import CameraFrame, Intrinsics, Pose


@lru_cache(maxsize=8)
def _strided_rays(intrinsics: Intrinsics, stride: int) -> np.ndarray:
    """Camera-frame directions (z = 1) for the strided pixel lattice."""
    vv, uu = np.meshgrid(
        np.arange(0, intrinsics.height, stride, dtype=np.float64),
        np.arange(0, intrinsics.width, stride, dtype=np.float64),
        indexing="ij",
    )
    dirs = np.stack(
        [
            (uu.reshape(-1) - intrinsics.cx) / intrinsics.fx,
            (vv.reshape(-1) - intrinsics.cy) / intrinsics.fy,
            np.ones(uu.size),
        ],
        axis=1,
    )
    dirs.setflags(write=False)
    return dirs

UNKNOWN = 0
FREE = 1
OCCUPIED = 2

DEFAULT_STRIDE = 4
DEFAULT_MAX_RANGE = 8.0


class InvalidRegionError(ValueError):
    """Raised when a query region does not intersect the grid."""


@dataclass(eq=False)
class OccupancyGrid:
    origin: np.ndarray
    voxel_size: float
    dims: tuple[int, int, int]
    states: np.ndarray

    def __post_init__(self):
        if self.voxel_size <= 0:
            raise ValueError("voxel size must be positive")
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.dims = tuple(int(d) for d in self.dims)
        if self.states.shape != self.dims:
            raise ValueError(f"states shape {self.states.shape} != dims {self.dims}")

    @classmethod
    def create(cls, min_corner, max_corner, voxel_size: float) -> "OccupancyGrid":
        min_corner = np.asarray(min_corner, dtype=np.float64)
        max_corner = np.asarray(max_corner, dtype=np.float64)
        dims = tuple(int(np.ceil((max_corner[i] - min_corner[i]) / voxel_size)) for i in range(3))
        if any(d <= 0 for d in dims):
            raise ValueError("grid extent must be positive along every axis")
        return cls(min_corner, voxel_size, dims, np.zeros(dims, dtype=np.uint8))

    @property
    def voxel_count(self) -> int:
        return int(np.prod(self.dims))

    def voxel_indices(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(N,3) voxel indices plus an in-bounds mask for (N,3) world points."""
        idx = np.floor((points - self.origin) / self.voxel_size).astype(np.int64)
        inside = np.all((idx >= 0) & (idx < np.array(self.dims)), axis=1)
        return idx, inside

    def _flat(self, idx: np.ndarray) -> np.ndarray:
        return np.ravel_multi_index((idx[:, 0], idx[:, 1], idx[:, 2]), self.dims)

    def integrate_frame(
        self,
        frame: CameraFrame,
        stride: int = DEFAULT_STRIDE,
        max_range: float = DEFAULT_MAX_RANGE,
    ):
        """Carve one depth frame into the grid.

        Voxels along each sampled ray become free up to just short of the
        surface; the voxel holding the surface point becomes occupied.
        Pixels without a depth return carve free space out to
        ``max_range``. Ray segments outside the grid are clipped silently.
        """
        if stride < 1:
            raise ValueError("stride must be >= 1")
        intr = frame.intrinsics
        depths = frame.depth[::stride, ::stride].astype(np.float64).reshape(-1)
        dirs_cam = _strided_rays(intr, stride)
        dirs_world = dirs_cam @ frame.pose.rotation.T
        origin = frame.pose.translation

        valid = np.isfinite(depths) & (depths > 0)
        step = self.voxel_size
        # Free-space carve limit: just short of the surface for hits, the
        # configured max range for misses.
        limits = np.where(valid, depths - 0.5 * step, max_range)
        limits = np.clip(limits, 0.0, max_range)

        # Clip the carve interval to the grid box so out-of-grid ray
        # segments cost nothing (they would be discarded anyway).
        dims = np.array(self.dims)
        grid_hi = self.origin + dims * self.voxel_size
        safe = np.where(dirs_world == 0.0, 1e-30, dirs_world)
        t0 = (self.origin - origin) / safe
        t1 = (grid_hi - origin) / safe
        enter = np.maximum(np.minimum(t0, t1).max(axis=1), 0.0)
        exits = np.maximum(t0, t1).min(axis=1)
        limits = np.minimum(limits, exits)

        flat_states = self.states.reshape(-1)
        max_steps = int(np.ceil(limits.max() / step)) if limits.size else 0
        ts = (np.arange(max_steps) + 0.5) * step
        inv = 1.0 / self.voxel_size
        upper = (dims - 1).astype(np.float64)
        for start in range(0, dirs_world.shape[0], 4096):
            d = dirs_world[start : start + 4096]
            lim = limits[start : start + 4096]
            ent = enter[start : start + 4096]
            live = (ts[None, :] <= lim[:, None]) & (ts[None, :] >= ent[:, None])
            # Clipped segments are inside the grid up to float fuzz, so the
            # indices can be clamped instead of masked.
            rel = (origin - self.origin) * inv + ts[None, :, None] * (d[:, None, :] * inv)
            np.clip(rel, 0.0, upper, out=rel)
            idx = rel.astype(np.int64)
            flat = (idx[..., 0] * self.dims[1] + idx[..., 1]) * self.dims[2] + idx[..., 2]
            flat = flat[live]
            keep = flat_states[flat] != OCCUPIED
            flat_states[flat[keep]] = FREE

        endpoints = origin[None, :] + depths[valid, None] * dirs_world[valid]
        idx, inside = self.voxel_indices(endpoints)
        flat_states[self._flat(idx[inside])] = OCCUPIED

    def unobserved_overlay(self, pose: Pose, intrinsics: Intrinsics) -> np.ndarray:
        """Boolean pixel mask of rays that reach an unknown voxel before any
        occupied voxel.

        Marches rays with the same parameterization and sample phase as
        integrate_frame, so a view whose every ray was already carved from
        the same pose produces an empty mask exactly.
        """
        dirs = _strided_rays(intrinsics, 1) @ pose.rotation.T
        origin = pose.translation

        dims = np.array(self.dims)
        grid_hi = self.origin + dims * self.voxel_size
        safe = np.where(dirs == 0.0, 1e-30, dirs)
        t0 = (self.origin - origin) / safe
        t1 = (grid_hi - origin) / safe
        enter = np.maximum(np.minimum(t0, t1).max(axis=1), 0.0)
        exits = np.maximum(t0, t1).min(axis=1)
        exits = np.where(exits >= enter, exits, -np.inf)

        n = dirs.shape[0]
        hit_unknown = np.zeros(n, dtype=bool)
        blocked = np.zeros(n, dtype=bool)
        flat_states = self.states.reshape(-1)
        step = self.voxel_size
        max_exit = float(exits.max(initial=-np.inf))
        k = 0
        while True:
            t = (k + 0.5) * step
            k += 1
            if t > max_exit:
                break
            active = ~(hit_unknown | blocked) & (t >= enter) & (t <= exits)
            if not active.any():
                continue
            idx, inside = self.voxel_indices(origin[None, :] + t * dirs[active])
            state = np.full(idx.shape[0], FREE, dtype=np.uint8)
            state[inside] = flat_states[self._flat(idx[inside])]
            active_idx = np.flatnonzero(active)
            hit_unknown[active_idx[state == UNKNOWN]] = True
            blocked[active_idx[state == OCCUPIED]] = True
        return hit_unknown.reshape(intrinsics.height, intrinsics.width)

    def _region_slices(self, region_min, region_max) -> tuple[slice, slice, slice]:
        region_min = np.asarray(region_min, dtype=np.float64)
        region_max = np.asarray(region_max, dtype=np.float64)
        lo = np.floor((region_min - self.origin) / self.voxel_size).astype(int)
        hi = np.ceil((region_max - self.origin) / self.voxel_size).astype(int)
        lo = np.maximum(lo, 0)
        hi = np.minimum(hi, np.array(self.dims))
        if np.any(hi <= lo):
            raise InvalidRegionError(f"region {region_min}..{region_max} misses the grid")
        return tuple(slice(int(a), int(b)) for a, b in zip(lo, hi))

    def unobserved_fraction(self, region_min, region_max) -> float:
        """Unknown voxels / total voxels among those intersecting the region."""
        block = self.states[self._region_slices(region_min, region_max)]
        return float(np.count_nonzero(block == UNKNOWN) / block.size)

    # --- persistence ------------------------------------------------------

    def state_bytes(self) -> bytes:
        return self.states.astype(np.uint8).tobytes()

    def meta(self) -> dict:
        return {
            "origin": [float(v) for v in self.origin],
            "voxel_size": float(self.voxel_size),
            "dims": list(self.dims),
        }

    def save(self, path):
        path = Path(path)
        path.write_bytes(self.state_bytes())
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(self.meta(), sort_keys=True))

    @classmethod
    def from_bytes(cls, meta: dict, blob: bytes) -> "OccupancyGrid":
        dims = tuple(int(d) for d in meta["dims"])
        states = np.frombuffer(blob, dtype=np.uint8).reshape(dims).copy()
        return cls(np.asarray(meta["origin"]), float(meta["voxel_size"]), dims, states)

    @classmethod
    def load(cls, path) -> "OccupancyGrid":
        path = Path(path)
        meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
        return cls.from_bytes(meta, path.read_bytes())

    def states_rle(self) -> str:
        """Run-length encoding "state count state count ..." of the flat grid."""
        flat = self.states.reshape(-1)
        changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
        bounds = np.concatenate([[0], changes, [flat.size]])
        parts = []
        for a, b in zip(bounds[:-1], bounds[1:]):
            parts.append(f"{int(flat[a])} {int(b - a)}")
        return " ".join(parts)
