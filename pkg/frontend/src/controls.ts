// First-person camera: WASD + R/F translate, mouse drag looks around.
// The integration step is a pure function so scripted input sequences can
// be replayed in tests; the DOM wrapper just accumulates input state.

import { lookAtPose, PoseJson, Vec3, add, scale } from "./math.js";

export interface InputState {
  forward: boolean;
  back: boolean;
  left: boolean;
  right: boolean;
  up: boolean;
  down: boolean;
  yawDelta: number;
  pitchDelta: number;
}

export function emptyInput(): InputState {
  return {
    forward: false,
    back: false,
    left: false,
    right: false,
    up: false,
    down: false,
    yawDelta: 0,
    pitchDelta: 0,
  };
}

export interface CameraState {
  position: Vec3;
  yaw: number; // radians about world y; 0 faces +z
  pitch: number; // radians; positive looks up
}

export interface Bounds {
  min: Vec3;
  max: Vec3;
}

const PITCH_LIMIT = Math.PI / 2 - 0.05;

export function forwardVector(cam: CameraState): Vec3 {
  const cp = Math.cos(cam.pitch);
  return [cp * Math.sin(cam.yaw), Math.sin(cam.pitch), cp * Math.cos(cam.yaw)];
}

function clampToBounds(p: Vec3, bounds?: Bounds): { position: Vec3; clamped: boolean } {
  if (!bounds) return { position: p, clamped: false };
  let clamped = false;
  const position = p.map((v, i) => {
    const lo = bounds.min[i];
    const hi = bounds.max[i];
    if (v < lo) {
      clamped = true;
      return lo;
    }
    if (v > hi) {
      clamped = true;
      return hi;
    }
    return v;
  }) as Vec3;
  return { position, clamped };
}

export interface StepResult {
  camera: CameraState;
  moved: boolean;
  atBoundary: boolean;
}

/** Advance the camera by `dt` seconds of the given input. Pure. */
export function integrate(
  cam: CameraState,
  input: InputState,
  dt: number,
  speed = 1.5,
  bounds?: Bounds,
): StepResult {
  const yaw = cam.yaw + input.yawDelta;
  const pitch = Math.max(-PITCH_LIMIT, Math.min(PITCH_LIMIT, cam.pitch + input.pitchDelta));
  const fwd = forwardVector({ position: cam.position, yaw, pitch });
  const rightDir: Vec3 = [Math.cos(yaw), 0, -Math.sin(yaw)];
  let velocity: Vec3 = [0, 0, 0];
  if (input.forward) velocity = add(velocity, fwd);
  if (input.back) velocity = add(velocity, scale(fwd, -1));
  if (input.right) velocity = add(velocity, rightDir);
  if (input.left) velocity = add(velocity, scale(rightDir, -1));
  if (input.up) velocity = add(velocity, [0, 1, 0]);
  if (input.down) velocity = add(velocity, [0, -1, 0]);
  const raw = add(cam.position, scale(velocity, speed * dt));
  const { position, clamped } = clampToBounds(raw, bounds);
  const moved =
    position[0] !== cam.position[0] ||
    position[1] !== cam.position[1] ||
    position[2] !== cam.position[2] ||
    yaw !== cam.yaw ||
    pitch !== cam.pitch;
  return { camera: { position, yaw, pitch }, moved, atBoundary: clamped };
}

export function cameraPose(cam: CameraState): PoseJson {
  const fwd = forwardVector(cam);
  return lookAtPose(cam.position, add(cam.position, fwd));
}

const KEY_MAP: Record<string, keyof InputState> = {
  KeyW: "forward",
  KeyS: "back",
  KeyA: "left",
  KeyD: "right",
  KeyR: "up",
  KeyF: "down",
};

/** DOM adapter: listens on a canvas, exposes step() for the render loop. */
export class FirstPersonControls {
  camera: CameraState;
  atBoundary = false;
  private keys = emptyInput();
  private dragging = false;

  constructor(
    element: HTMLElement,
    start: CameraState,
    private bounds?: Bounds,
    private lookSpeed = 0.005,
  ) {
    this.camera = start;
    element.tabIndex = 0;
    element.addEventListener("keydown", (e) => this.setKey(e.code, true));
    element.addEventListener("keyup", (e) => this.setKey(e.code, false));
    element.addEventListener("mousedown", () => (this.dragging = true));
    window.addEventListener("mouseup", () => (this.dragging = false));
    element.addEventListener("mousemove", (e) => {
      if (!this.dragging) return;
      this.keys.yawDelta -= e.movementX * this.lookSpeed;
      this.keys.pitchDelta -= e.movementY * this.lookSpeed;
    });
  }

  private setKey(code: string, pressed: boolean) {
    const name = KEY_MAP[code];
    if (name) (this.keys as unknown as Record<string, boolean>)[name] = pressed;
  }

  /** Returns the new pose when the camera moved this frame, else null. */
  step(dt: number): PoseJson | null {
    const result = integrate(this.camera, this.keys, dt, 1.5, this.bounds);
    this.keys.yawDelta = 0;
    this.keys.pitchDelta = 0;
    this.camera = result.camera;
    this.atBoundary = result.atBoundary;
    return result.moved ? cameraPose(this.camera) : null;
  }
}
