// Walkthrough entry point: create a session, mirror its event stream into
// the client snapshot, stream steering poses back, and render.

import { FirstPersonControls, cameraPose } from "./controls.js";
import { SceneJson, Vec3 } from "./math.js";
import { BackendClient } from "./net.js";
import { applyDelta, ClientState } from "./state.js";
import { WalkthroughRenderer } from "./render.js";

const POSE_SEND_INTERVAL_MS = 33; // ~30 Hz; the server enforces capture cadence

async function boot(): Promise<void> {
  const canvas = document.getElementById("viewport") as HTMLCanvasElement;
  const client = new BackendClient();
  const session = await client.createSession("desk");
  const scene: SceneJson = await client.getScene(session.session_id);

  const state: ClientState = { snapshot: null, connection: "connecting" };
  client.openEvents(
    session.session_id,
    (snapshot) => {
      state.snapshot = snapshot;
      state.connection = "live";
    },
    (delta) => {
      if (state.snapshot) state.snapshot = applyDelta(state.snapshot, delta);
    },
    () => {
      state.connection = "closed";
    },
  );

  const boundsMargin = 0.2;
  const bounds = {
    min: scene.bounds.min.map((v) => v + boundsMargin) as Vec3,
    max: scene.bounds.max.map((v) => v - boundsMargin) as Vec3,
  };
  const controls = new FirstPersonControls(
    canvas,
    { position: [1.6, 0.3, 1.6], yaw: Math.PI + Math.atan2(1.6, 1.6), pitch: -0.25 },
    bounds,
  );
  const renderer = new WalkthroughRenderer(canvas, session.intrinsics);

  const started = performance.now();
  let lastSent = -Infinity;
  let lastTick = started;

  function tick(now: number): void {
    const dt = Math.min(0.1, (now - lastTick) / 1000);
    lastTick = now;
    const movedPose = controls.step(dt);
    if (movedPose && now - lastSent >= POSE_SEND_INTERVAL_MS && state.connection === "live") {
      lastSent = now;
      client
        .postPose(session.session_id, movedPose, (now - started) / 1000)
        .catch(() => (state.connection = "closed"));
    }
    renderer.drawFrame(state.snapshot, cameraPose(controls.camera), scene, {
      connection: state.connection,
      atBoundary: controls.atBoundary,
    });
    requestAnimationFrame(tick);
  }

  canvas.focus();
  requestAnimationFrame(tick);
}

boot().catch((error) => {
  const hud = document.getElementById("error");
  if (hud) hud.textContent = `failed to start: ${error}`;
  console.error(error);
});
