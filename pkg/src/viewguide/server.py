"""HTTP/WebSocket service around capture sessions.

Mirrors the mobile-offload split: clients upload keyframes for vision
processing (stateless, idempotent per frame index) and, in interactive
mode, stream camera poses that the server renders against its scene and
feeds through session cadence. A WebSocket event stream pushes a full
snapshot on subscribe followed by ordered deltas so UIs can mirror
session state exactly.

Endpoints (all JSON):
    POST /v1/session                     create session
    GET  /v1/session/{sid}/state         current snapshot
    GET  /v1/session/{sid}/scene         scene description
    POST /v1/session/{sid}/keyframe      detection + scoring for one keyframe
    POST /v1/session/{sid}/pose          interactive pose submission
    WS   /v1/session/{sid}/events        snapshot, then deltas
"""

from __future__ import annotations

import asyncio
import base64
import binascii
import io
import json
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import Response
from pydantic import BaseModel, Field

from .detection import SyntheticDetector
from .geometry import CameraFrame, Intrinsics, Pose, intrinsics_from_fov
from .scoring import PriorTable, aggregate_score, is_complex, load_default_table
from .session import CaptureSession, FrameOrderingError, SessionConfig
from .simulator import Scene, load_bundled_scene, make_frame


class PoseModel(BaseModel):
    rotation: list[float] = Field(min_length=9, max_length=9)
    translation: list[float] = Field(min_length=3, max_length=3)

    def to_pose(self) -> Pose:
        try:
            return Pose.from_json(self.model_dump())
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=f"invalid pose: {exc}") from exc


class IntrinsicsModel(BaseModel):
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def to_intrinsics(self) -> Intrinsics:
        try:
            return Intrinsics.from_json(self.model_dump())
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=f"invalid intrinsics: {exc}") from exc


class CreateSessionRequest(BaseModel):
    scene: dict | None = None
    scene_name: str | None = None
    interactive: bool = True
    config: dict = Field(default_factory=dict)


class KeyframeRequest(BaseModel):
    frame_index: int
    timestamp: float
    intrinsics: IntrinsicsModel
    pose: PoseModel
    image_b64: str
    depth_b64: str


class PoseRequest(BaseModel):
    pose: PoseModel
    timestamp: float


@dataclass
class ServerSession:
    session_id: str
    scene: Scene
    session: CaptureSession
    intrinsics: Intrinsics
    interactive: bool
    detector: SyntheticDetector
    keyframe_cache: dict[int, bytes] = field(default_factory=dict)
    subscribers: list[asyncio.Queue] = field(default_factory=list)

    def broadcast(self, events: list[dict]):
        for queue in self.subscribers:
            for event in events:
                queue.put_nowait(event)


def build_state_snapshot(entry: ServerSession) -> dict:
    """Canonical full-state JSON; deltas applied to an older snapshot must
    reproduce this exactly (see apply_delta)."""
    session = entry.session
    status = session.completion_status()
    return {
        "seq": session._event_seq,
        "clock": session.frames[-1].timestamp if session.frames else 0.0,
        "frames": len(session.frames),
        "keyframes": len(session.keyframes),
        "spheres": sorted(
            (s.to_json() for s in session.spheres), key=lambda s: s["id"]
        ),
        "remaining_subsurfaces": status.remaining_subsurfaces,
        "unobserved_fraction": status.unobserved_fraction,
        "grid_rle": session.grid.states_rle(),
        "grid_meta": session.grid.meta(),
    }


def apply_delta(state: dict, event: dict) -> dict:
    """Pure reducer from (snapshot state, delta event) to the next state.

    The walkthrough client implements the same reduction; keeping this
    copy server-side lets tests pin the semantics the stream relies on.
    """
    if event["seq"] <= state["seq"]:
        return state
    state = json.loads(json.dumps(state))
    state["seq"] = event["seq"]
    kind = event["type"]
    spheres = {s["id"]: s for s in state["spheres"]}
    if kind == "frame_accepted":
        state["frames"] += 1
        if event["is_keyframe"]:
            state["keyframes"] += 1
        state["clock"] = event["t"]
    elif kind == "sphere_added":
        spheres[event["sphere"]["id"]] = event["sphere"]
    elif kind == "spheres_merged":
        for sid in event["removed"]:
            spheres.pop(sid, None)
        spheres[event["sphere"]["id"]] = event["sphere"]
    elif kind == "coverage_marked":
        sphere = spheres[event["sphere_id"]]
        for index in event["indices"]:
            sphere["subsurfaces"][index]["covered"] = True
    elif kind == "status":
        state["remaining_subsurfaces"] = event["remaining_subsurfaces"]
        state["unobserved_fraction"] = event["unobserved_fraction"]
        state["grid_rle"] = event["grid_rle"]
    state["spheres"] = sorted(spheres.values(), key=lambda s: s["id"])
    return state


def _decode_keyframe_payload(msg: KeyframeRequest, intr: Intrinsics) -> CameraFrame:
    from PIL import Image

    try:
        image_bytes = base64.b64decode(msg.image_b64, validate=True)
        rgb = np.asarray(Image.open(io.BytesIO(image_bytes)).convert("RGB"))
    except (binascii.Error, OSError, ValueError) as exc:
        raise HTTPException(status_code=400, detail=f"bad image payload: {exc}") from exc
    try:
        depth_bytes = base64.b64decode(msg.depth_b64, validate=True)
        depth = np.frombuffer(depth_bytes, dtype="<f4")
    except (binascii.Error, ValueError) as exc:
        raise HTTPException(status_code=400, detail=f"bad depth payload: {exc}") from exc
    if rgb.shape[:2] != (intr.height, intr.width):
        raise HTTPException(
            status_code=400,
            detail=f"image is {rgb.shape[1]}x{rgb.shape[0]}, declared {intr.width}x{intr.height}",
        )
    if depth.size != intr.width * intr.height:
        raise HTTPException(
            status_code=400,
            detail=f"depth has {depth.size} samples, expected {intr.width * intr.height}",
        )
    return CameraFrame(
        rgb=rgb,
        depth=depth.reshape(intr.height, intr.width).astype(np.float64),
        intrinsics=intr,
        pose=msg.pose.to_pose(),
        timestamp=msg.timestamp,
    )


def encode_keyframe_payload(frame: CameraFrame) -> dict:
    """Client-side encoding helper matching KeyframeRequest."""
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(frame.rgb).save(buf, format="PNG")
    return {
        "intrinsics": frame.intrinsics.to_json(),
        "pose": frame.pose.to_json(),
        "image_b64": base64.b64encode(buf.getvalue()).decode(),
        "depth_b64": base64.b64encode(frame.depth.astype("<f4").tobytes()).decode(),
    }


def create_app(
    default_scene: Scene | None = None,
    prior_table: PriorTable | None = None,
    base_config: SessionConfig | None = None,
) -> FastAPI:
    app = FastAPI(title="viewguide", version="1.0")
    app.state.sessions = {}
    app.state.next_session = 1
    app.state.default_scene = default_scene
    app.state.prior_table = prior_table or load_default_table()
    app.state.base_config = base_config or SessionConfig()

    def entry_or_404(session_id: str) -> ServerSession:
        entry = app.state.sessions.get(session_id)
        if entry is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return entry

    @app.post("/v1/session")
    async def create_session(request: CreateSessionRequest) -> dict:
        if request.scene is not None:
            try:
                scene = Scene.from_json(request.scene)
            except (KeyError, ValueError) as exc:
                raise HTTPException(status_code=400, detail=f"bad scene: {exc}") from exc
        elif request.scene_name is not None:
            try:
                scene = load_bundled_scene(request.scene_name)
            except FileNotFoundError as exc:
                raise HTTPException(status_code=404, detail=str(exc)) from exc
        elif app.state.default_scene is not None:
            scene = app.state.default_scene
        else:
            scene = load_bundled_scene("desk")
        try:
            config = app.state.base_config.with_overrides(
                {**scene.session_overrides, **request.config}
            )
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        session_id = f"sess-{app.state.next_session:04d}"
        app.state.next_session += 1
        detector = SyntheticDetector(scene)
        entry = ServerSession(
            session_id=session_id,
            scene=scene,
            session=CaptureSession(config, detector, app.state.prior_table),
            intrinsics=intrinsics_from_fov(config.processing_width, config.processing_height),
            interactive=request.interactive,
            detector=detector,
        )
        app.state.sessions[session_id] = entry
        return {
            "session_id": session_id,
            "config": config.to_json(),
            "intrinsics": entry.intrinsics.to_json(),
        }

    @app.get("/v1/session/{session_id}/state")
    async def get_state(session_id: str) -> dict:
        return build_state_snapshot(entry_or_404(session_id))

    @app.get("/v1/session/{session_id}/scene")
    async def get_scene(session_id: str) -> dict:
        return entry_or_404(session_id).scene.to_json()

    @app.post("/v1/session/{session_id}/keyframe")
    async def handle_keyframe(session_id: str, msg: KeyframeRequest) -> Response:
        entry = entry_or_404(session_id)
        cached = entry.keyframe_cache.get(msg.frame_index)
        if cached is not None:
            return Response(content=cached, media_type="application/json")
        intr = msg.intrinsics.to_intrinsics()
        frame = _decode_keyframe_payload(msg, intr)
        try:
            detections = entry.detector.detect(frame)
        except Exception as exc:
            raise HTTPException(
                status_code=500,
                detail={"frame_index": msg.frame_index, "error": str(exc)},
            ) from exc
        table = app.state.prior_table
        threshold = entry.session.config.score_threshold
        rows = []
        for det in detections:
            row = det.to_json()
            if det.category in table:
                scores = table[det.category]
                row["scores"] = dict(zip(
                    ("geometric", "texture", "size", "specularity", "transparency"),
                    scores.values(),
                ))
                row["aggregate"] = aggregate_score(scores)
                row["complex"] = is_complex(det.category, table, threshold)
            else:
                row["scores"] = None
                row["aggregate"] = None
                row["complex"] = False
            rows.append(row)
        body = json.dumps(
            {"session_id": session_id, "frame_index": msg.frame_index, "detections": rows},
            sort_keys=True,
        ).encode()
        entry.keyframe_cache[msg.frame_index] = body
        return Response(content=body, media_type="application/json")

    @app.post("/v1/session/{session_id}/pose")
    async def submit_pose(session_id: str, request: PoseRequest) -> dict:
        entry = entry_or_404(session_id)
        if not entry.interactive:
            raise HTTPException(status_code=409, detail="session is not interactive")
        frame = make_frame(
            entry.scene, request.pose.to_pose(), entry.intrinsics, request.timestamp
        )
        try:
            events = entry.session.ingest(frame, request.timestamp)
        except FrameOrderingError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        entry.broadcast(events)
        if not events:
            return {"accepted": False, "frame_index": None, "reason": "below capture cadence, skipped"}
        return {"accepted": True, "frame_index": events[0]["frame_index"], "reason": None}

    @app.websocket("/v1/session/{session_id}/events")
    async def state_stream(websocket: WebSocket, session_id: str):
        await websocket.accept()
        entry = app.state.sessions.get(session_id)
        if entry is None:
            await websocket.send_json({"kind": "error", "detail": f"unknown session {session_id!r}"})
            await websocket.close(code=4404)
            return
        queue: asyncio.Queue = asyncio.Queue()
        entry.subscribers.append(queue)
        snapshot = build_state_snapshot(entry)
        try:
            await websocket.send_json({"kind": "snapshot", "state": snapshot})
            while True:
                event = await queue.get()
                if event["seq"] <= snapshot["seq"]:
                    continue
                await websocket.send_json({"kind": "delta", "event": event})
        except WebSocketDisconnect:
            pass
        finally:
            entry.subscribers.remove(queue)

    return app


def flush_snapshots(app: FastAPI, directory) -> list[str]:
    """Persist every live session; used on service shutdown."""
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for session_id, entry in app.state.sessions.items():
        path = directory / f"{session_id}.snap"
        path.write_bytes(entry.session.snapshot())
        written.append(str(path))
    return written
