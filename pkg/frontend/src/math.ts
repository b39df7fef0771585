// Camera/display math mirrored from the backend so rendering decisions
// (projection, FoV fraction, display mode, occlusion alpha) are pure
// client-side functions of the latest state.
//
// Conventions match the backend: world right-handed y-up; camera x-right,
// y-down, z-forward; depth is the camera-frame z coordinate; rotation is
// camera-to-world, row-major; translation is the camera position.

export type Vec3 = [number, number, number];

export interface PoseJson {
  rotation: number[]; // row-major 3x3, camera-to-world
  translation: number[];
}

export interface IntrinsicsJson {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  width: number;
  height: number;
}

export const FULL_FOV_FRACTION = 0.2;
export const HIDDEN_FOV_FRACTION = 1.0;
export const DEFAULT_DEPTH_TOLERANCE = 0.05;

export type DisplayMode = "full" | "dot" | "hidden";

export function add(a: Vec3, b: Vec3): Vec3 {
  return [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
}

export function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

export function scale(a: Vec3, s: number): Vec3 {
  return [a[0] * s, a[1] * s, a[2] * s];
}

export function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

export function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

export function norm(a: Vec3): number {
  return Math.hypot(a[0], a[1], a[2]);
}

export function normalize(a: Vec3): Vec3 {
  const n = norm(a);
  return [a[0] / n, a[1] / n, a[2] / n];
}

/** Apply a row-major rotation matrix to a vector. */
export function rotApply(r: number[], v: Vec3): Vec3 {
  return [
    r[0] * v[0] + r[1] * v[1] + r[2] * v[2],
    r[3] * v[0] + r[4] * v[1] + r[5] * v[2],
    r[6] * v[0] + r[7] * v[1] + r[8] * v[2],
  ];
}

/** Apply the transpose (world-to-camera direction) of a row-major rotation. */
export function rotApplyTranspose(r: number[], v: Vec3): Vec3 {
  return [
    r[0] * v[0] + r[3] * v[1] + r[6] * v[2],
    r[1] * v[0] + r[4] * v[1] + r[7] * v[2],
    r[2] * v[0] + r[5] * v[1] + r[8] * v[2],
  ];
}

/** Pose at `position` looking through `target`, image-down aligned with world-down. */
export function lookAtPose(position: Vec3, target: Vec3, up: Vec3 = [0, 1, 0]): PoseJson {
  const forward = sub(target, position);
  const z = normalize(forward);
  const down: Vec3 = [-up[0], -up[1], -up[2]];
  let y = sub(down, scale(z, dot(down, z)));
  if (norm(y) < 1e-9) {
    y = cross(z, [1, 0, 0]);
  }
  y = normalize(y);
  const x = cross(y, z);
  return {
    rotation: [x[0], y[0], z[0], x[1], y[1], z[1], x[2], y[2], z[2]],
    translation: [...position],
  };
}

export function cameraPoint(pose: PoseJson, p: Vec3): Vec3 {
  const rel = sub(p, pose.translation as Vec3);
  return rotApplyTranspose(pose.rotation, rel);
}

export interface ProjectedPoint {
  u: number;
  v: number;
  depth: number;
}

/** Project a world point; null when at or behind the camera plane. */
export function projectPoint(
  intr: IntrinsicsJson,
  pose: PoseJson,
  p: Vec3,
): ProjectedPoint | null {
  const cam = cameraPoint(pose, p);
  if (cam[2] <= 0) return null;
  return {
    u: (intr.fx * cam[0]) / cam[2] + intr.cx,
    v: (intr.fy * cam[1]) / cam[2] + intr.cy,
    depth: cam[2],
  };
}

export function verticalFov(intr: IntrinsicsJson): number {
  return 2 * Math.atan(intr.height / (2 * intr.fy));
}

/** Sphere angular diameter over the vertical FoV; Infinity when inside. */
export function fovFraction(
  center: Vec3,
  radius: number,
  pose: PoseJson,
  vfov: number,
): number {
  const dist = norm(sub(center, pose.translation as Vec3));
  if (dist <= radius) return Infinity;
  return (2 * Math.asin(radius / dist)) / vfov;
}

export function displayMode(
  center: Vec3,
  radius: number,
  pose: PoseJson,
  vfov: number,
): DisplayMode {
  const fraction = fovFraction(center, radius, pose, vfov);
  if (fraction < FULL_FOV_FRACTION) return "dot";
  if (fraction < HIDDEN_FOV_FRACTION) return "full";
  return "hidden";
}

/** Opaque in front of the scene, fading linearly to invisible once more
 * than the tolerance behind it. */
export function occlusionAlpha(
  sphereDepth: number,
  sceneDepth: number,
  tolerance: number = DEFAULT_DEPTH_TOLERANCE,
): number {
  const delta = sphereDepth - sceneDepth;
  return Math.min(1, Math.max(0, 1 - delta / tolerance));
}

// --- scene geometry (for client-side occlusion queries) -------------------

export interface SceneObjectJson {
  shape: "sphere" | "box" | "plane";
  position: number[];
  size: number[];
  category: string;
}

export interface SceneJson {
  bounds: { min: number[]; max: number[] };
  objects: SceneObjectJson[];
}

const RAY_NEAR = 1e-6;

function intersectSphere(origin: Vec3, dir: Vec3, center: Vec3, radius: number): number {
  const m = sub(origin, center);
  const a = dot(dir, dir);
  const b = dot(dir, m);
  const c = dot(m, m) - radius * radius;
  const disc = b * b - a * c;
  if (disc < 0) return Infinity;
  const sq = Math.sqrt(disc);
  const tNear = (-b - sq) / a;
  if (tNear > RAY_NEAR) return tNear;
  const tFar = (-b + sq) / a;
  return tFar > RAY_NEAR ? tFar : Infinity;
}

function intersectBox(origin: Vec3, dir: Vec3, lo: Vec3, hi: Vec3): number {
  let tEnter = -Infinity;
  let tExit = Infinity;
  for (let i = 0; i < 3; i++) {
    const d = dir[i] === 0 ? 1e-30 : dir[i];
    const t0 = (lo[i] - origin[i]) / d;
    const t1 = (hi[i] - origin[i]) / d;
    tEnter = Math.max(tEnter, Math.min(t0, t1));
    tExit = Math.min(tExit, Math.max(t0, t1));
  }
  if (tEnter > tExit) return Infinity;
  if (tEnter > RAY_NEAR) return tEnter;
  return tExit > RAY_NEAR ? tExit : Infinity;
}

function objectAabb(obj: SceneObjectJson): [Vec3, Vec3] {
  const p = obj.position as Vec3;
  if (obj.shape === "sphere") {
    const r = obj.size[0];
    return [
      [p[0] - r, p[1] - r, p[2] - r],
      [p[0] + r, p[1] + r, p[2] + r],
    ];
  }
  const half = scale(obj.size as Vec3, 0.5);
  return [sub(p, half), add(p, half)];
}

function intersectPlane(origin: Vec3, dir: Vec3, obj: SceneObjectJson): number {
  const axis = obj.size.findIndex((s) => s === 0);
  if (axis < 0 || dir[axis] === 0) return Infinity;
  const t = (obj.position[axis] - origin[axis]) / dir[axis];
  if (!(t > RAY_NEAR)) return Infinity;
  for (let i = 0; i < 3; i++) {
    if (i === axis) continue;
    const coord = origin[i] + t * dir[i];
    if (Math.abs(coord - obj.position[i]) > obj.size[i] / 2) return Infinity;
  }
  return t;
}

/** Nearest ray parameter across the scene (Infinity on miss). With a
 * camera-frame z=1 direction the parameter is planar depth. */
export function intersectScene(origin: Vec3, dir: Vec3, scene: SceneJson): number {
  let best = Infinity;
  for (const obj of scene.objects) {
    let t: number;
    if (obj.shape === "sphere") {
      t = intersectSphere(origin, dir, obj.position as Vec3, obj.size[0]);
    } else if (obj.shape === "box") {
      const [lo, hi] = objectAabb(obj);
      t = intersectBox(origin, dir, lo, hi);
    } else {
      t = intersectPlane(origin, dir, obj);
    }
    if (t < best) best = t;
  }
  return best;
}

/** Planar scene depth along the camera ray through world point `p`. */
export function sceneDepthToward(pose: PoseJson, p: Vec3, scene: SceneJson): number {
  const cam = cameraPoint(pose, p);
  if (cam[2] <= 0) return Infinity;
  // Direction with camera z = 1 so the ray parameter equals planar depth.
  const dirCam: Vec3 = [cam[0] / cam[2], cam[1] / cam[2], 1];
  const dirWorld = rotApply(pose.rotation, dirCam);
  return intersectScene(pose.translation as Vec3, dirWorld, scene);
}
