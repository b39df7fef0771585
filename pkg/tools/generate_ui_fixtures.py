"""Regenerate the walkthrough client's test fixtures.

Runs the bundled desk orbit through the same code paths the server uses
and records (initial snapshot, event stream, final snapshot) so the
TypeScript reducer can be checked against real server output. Run from
the repository root:

    python tools/generate_ui_fixtures.py
"""

import json
from pathlib import Path

from viewguide.detection import SyntheticDetector
from viewguide.geometry import intrinsics_from_fov
from viewguide.server import ServerSession, apply_delta, build_state_snapshot
from viewguide.session import CaptureSession, SessionConfig
from viewguide.simulator import load_bundled_scene, load_bundled_trajectory, run_trajectory

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "frontend" / "tests" / "fixtures"


def main():
    scene = load_bundled_scene("desk")
    trajectory = load_bundled_trajectory("desk_orbit")
    # Coarser grid keeps the committed fixture small; sphere dynamics and
    # therefore the HUD counters are unaffected by voxel size.
    config = SessionConfig().with_overrides({**scene.session_overrides, "voxel_size": 0.3})
    session = CaptureSession(config, SyntheticDetector(scene))
    entry = ServerSession(
        session_id="fixture",
        scene=scene,
        session=session,
        intrinsics=intrinsics_from_fov(config.processing_width, config.processing_height),
        interactive=False,
        detector=session.detector,
    )
    initial = build_state_snapshot(entry)
    events = run_trajectory(scene, trajectory, session)
    final = build_state_snapshot(entry)

    state = initial
    for event in events:
        state = apply_delta(state, event)
    assert state == final, "python reducer must reproduce the final snapshot"
    assert final["remaining_subsurfaces"] == 0, "orbit must fully cover the sphere"

    FIXTURE_DIR.mkdir(parents=True, exist_ok=True)
    stream = {"initial": initial, "events": events, "final": final}
    path = FIXTURE_DIR / "stream.json"
    path.write_text(json.dumps(stream, sort_keys=True))
    scene_path = FIXTURE_DIR / "scene.json"
    scene_path.write_text(json.dumps(scene.to_json(), sort_keys=True))
    print(f"wrote {path} ({path.stat().st_size / 1024:.0f} KiB)")
    print(f"wrote {scene_path}")


if __name__ == "__main__":
    main()
