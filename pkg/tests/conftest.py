import numpy as np
import pytest

from viewguide.detection import SyntheticDetector
from viewguide.geometry import CameraFrame, Intrinsics, Pose, intrinsics_from_fov
from viewguide.session import CaptureSession, SessionConfig
from viewguide.simulator import (
    load_bundled_scene,
    load_bundled_trajectory,
    run_trajectory,
)


def random_rotation(rng: np.ndarray) -> np.ndarray:
    """Uniform-ish random rotation via QR-free SVD orthogonalization."""
    m = rng.normal(size=(3, 3))
    u, _, vt = np.linalg.svd(m)
    r = u @ vt
    if np.linalg.det(r) < 0:
        r[:, 0] = -r[:, 0]
    return r


def random_pose(rng) -> Pose:
    return Pose(random_rotation(rng), rng.normal(scale=2.0, size=3))


@pytest.fixture
def intr480() -> Intrinsics:
    return intrinsics_from_fov(480, 360)


@pytest.fixture(scope="session")
def desk_scene():
    return load_bundled_scene("desk")


@pytest.fixture(scope="session")
def desk_run(desk_scene):
    """One full bundled desk-orbit run, shared by the slower tests."""
    trajectory = load_bundled_trajectory("desk_orbit")
    config = SessionConfig().with_overrides(desk_scene.session_overrides)
    session = CaptureSession(config, SyntheticDetector(desk_scene))
    events = run_trajectory(desk_scene, trajectory, session)
    return {
        "scene": desk_scene,
        "trajectory": trajectory,
        "config": config,
        "session": session,
        "events": events,
        "snapshot": session.snapshot(),
    }


def blank_frame(intrinsics: Intrinsics, pose: Pose, t: float, depth_value: float = 0.0):
    """Frame with uniform depth; depth 0 means 'no returns anywhere'."""
    shape = (intrinsics.height, intrinsics.width)
    return CameraFrame(
        rgb=np.zeros(shape + (3,), dtype=np.uint8),
        depth=np.full(shape, depth_value, dtype=np.float64),
        intrinsics=intrinsics,
        pose=pose,
        timestamp=t,
    )
