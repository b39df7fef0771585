// Canvas-2D walkthrough renderer.
//
// Scene primitives draw as painter-sorted flat shapes; sphere proxies draw
// as mosaics of subsurface tiles (covered tiles are fully transparent, the
// rest fade by occlusion alpha against analytic scene depth), distant
// proxies collapse to a fixed-size dot, and unknown grid voxels get the
// pink-white striped "not yet observed" treatment. A HUD reports progress
// and connection state.

import {
  DEFAULT_DEPTH_TOLERANCE,
  IntrinsicsJson,
  PoseJson,
  SceneJson,
  SceneObjectJson,
  Vec3,
  add,
  cameraPoint,
  displayMode,
  norm,
  occlusionAlpha,
  projectPoint,
  scale,
  sceneDepthToward,
  sub,
  verticalFov,
} from "./math.js";
import { Snapshot, decodeGridRle, unknownVoxelCenters } from "./state.js";

const PALETTE: Record<string, string> = {
  floor: "#6b7280",
  wall: "#9ca3af",
  desk: "#8b5e3c",
  default: "#64748b",
};

const SPHERE_TILE_COLOR = "#38bdf8";
const DOT_COLOR = "#f59e0b";

interface Drawable {
  depth: number;
  draw: (ctx: CanvasRenderingContext2D) => void;
}

function objectColor(category: string): string {
  return PALETTE[category] ?? PALETTE.default;
}

function boxCorners(obj: SceneObjectJson): Vec3[] {
  const p = obj.position as Vec3;
  const half = scale(obj.size as Vec3, 0.5);
  const corners: Vec3[] = [];
  for (const sx of [-1, 1])
    for (const sy of [-1, 1])
      for (const sz of [-1, 1])
        corners.push(add(p, [half[0] * sx, half[1] * sy, half[2] * sz]));
  return corners;
}

export class WalkthroughRenderer {
  private stripePattern: CanvasPattern | null = null;

  constructor(
    private canvas: HTMLCanvasElement,
    private intrinsics: IntrinsicsJson,
  ) {
    canvas.width = intrinsics.width;
    canvas.height = intrinsics.height;
  }

  private stripes(ctx: CanvasRenderingContext2D): CanvasPattern {
    if (this.stripePattern) return this.stripePattern;
    const tile = document.createElement("canvas");
    tile.width = 8;
    tile.height = 8;
    const tctx = tile.getContext("2d")!;
    tctx.fillStyle = "#ffffff";
    tctx.fillRect(0, 0, 8, 8);
    tctx.strokeStyle = "#ec4899";
    tctx.lineWidth = 3;
    tctx.beginPath();
    tctx.moveTo(-2, 10);
    tctx.lineTo(10, -2);
    tctx.stroke();
    this.stripePattern = ctx.createPattern(tile, "repeat")!;
    return this.stripePattern;
  }

  drawFrame(
    snapshot: Snapshot | null,
    pose: PoseJson,
    scene: SceneJson,
    hud: { connection: string; atBoundary: boolean },
  ): void {
    const ctx = this.canvas.getContext("2d")!;
    const intr = this.intrinsics;
    ctx.fillStyle = "#111827";
    ctx.fillRect(0, 0, intr.width, intr.height);
    const drawables: Drawable[] = [];

    for (const obj of scene.objects) {
      this.collectSceneObject(obj, pose, drawables);
    }
    if (snapshot) {
      this.collectOverlay(snapshot, pose, drawables, ctx);
      this.collectSpheres(snapshot, pose, scene, drawables);
    }
    drawables.sort((a, b) => b.depth - a.depth);
    for (const d of drawables) d.draw(ctx);
    this.drawHud(ctx, snapshot, hud);
  }

  private collectSceneObject(obj: SceneObjectJson, pose: PoseJson, out: Drawable[]): void {
    const intr = this.intrinsics;
    if (obj.shape === "sphere") {
      const projected = projectPoint(intr, pose, obj.position as Vec3);
      if (!projected) return;
      const radiusPx = (obj.size[0] * intr.fy) / projected.depth;
      out.push({
        depth: projected.depth,
        draw: (ctx) => {
          ctx.fillStyle = objectColor(obj.category);
          ctx.beginPath();
          ctx.arc(projected.u, projected.v, radiusPx, 0, Math.PI * 2);
          ctx.fill();
        },
      });
      return;
    }
    // Boxes and planes: convex hull of the projected corners.
    const corners = boxCorners(obj)
      .map((c) => projectPoint(intr, pose, c))
      .filter((p): p is NonNullable<typeof p> => p !== null);
    if (corners.length < 3) return;
    const hull = convexHull(corners.map((c) => [c.u, c.v] as [number, number]));
    if (hull.length < 3) return;
    const depth = Math.min(...corners.map((c) => c.depth));
    out.push({
      depth,
      draw: (ctx) => {
        ctx.fillStyle = objectColor(obj.category);
        ctx.globalAlpha = 0.9;
        ctx.beginPath();
        ctx.moveTo(hull[0][0], hull[0][1]);
        for (const [u, v] of hull.slice(1)) ctx.lineTo(u, v);
        ctx.closePath();
        ctx.fill();
        ctx.globalAlpha = 1;
        ctx.strokeStyle = "#1f2937";
        ctx.stroke();
      },
    });
  }

  private collectSpheres(
    snapshot: Snapshot,
    pose: PoseJson,
    scene: SceneJson,
    out: Drawable[],
  ): void {
    const intr = this.intrinsics;
    const vfov = verticalFov(intr);
    for (const sphere of snapshot.spheres) {
      const center = sphere.center as Vec3;
      const mode = displayMode(center, sphere.radius, pose, vfov);
      if (mode === "hidden") continue;
      const projectedCenter = projectPoint(intr, pose, center);
      if (!projectedCenter) continue;
      if (mode === "dot") {
        const sceneDepth = sceneDepthToward(pose, center, scene);
        if (sceneDepth < projectedCenter.depth) continue; // behind geometry
        out.push({
          depth: projectedCenter.depth,
          draw: (ctx) => {
            ctx.fillStyle = DOT_COLOR;
            ctx.beginPath();
            ctx.arc(projectedCenter.u, projectedCenter.v, 4, 0, Math.PI * 2);
            ctx.fill();
          },
        });
        continue;
      }
      const tilePx = Math.max(
        3,
        (sphere.radius * intr.fy) / projectedCenter.depth / 5,
      );
      for (const subsurface of sphere.subsurfaces) {
        if (subsurface.covered) continue; // transparent once captured
        const point = add(center, scale(subsurface.dir as Vec3, sphere.radius));
        const projected = projectPoint(intr, pose, point);
        if (!projected) continue;
        const cam = cameraPoint(pose, point);
        if (cam[2] <= 0) continue;
        const sceneDepth = sceneDepthToward(pose, point, scene);
        const alpha = occlusionAlpha(projected.depth, sceneDepth, DEFAULT_DEPTH_TOLERANCE);
        if (alpha <= 0) continue;
        // back-facing tiles fade slightly so the mosaic reads as a volume
        const facing = -dot3(
          subsurface.dir as Vec3,
          normalizeDir(sub(center, pose.translation as Vec3)),
        );
        out.push({
          depth: projected.depth,
          draw: (ctx) => {
            ctx.globalAlpha = alpha * (facing > 0 ? 0.9 : 0.35);
            ctx.fillStyle = SPHERE_TILE_COLOR;
            ctx.beginPath();
            ctx.arc(projected.u, projected.v, tilePx, 0, Math.PI * 2);
            ctx.fill();
            ctx.globalAlpha = 1;
          },
        });
      }
    }
  }

  private collectOverlay(
    snapshot: Snapshot,
    pose: PoseJson,
    out: Drawable[],
    ctx: CanvasRenderingContext2D,
  ): void {
    const meta = snapshot.grid_meta;
    const voxels = meta.dims[0] * meta.dims[1] * meta.dims[2];
    const states = decodeGridRle(snapshot.grid_rle, voxels);
    const pattern = this.stripes(ctx);
    const intr = this.intrinsics;
    for (const center of unknownVoxelCenters(meta, states)) {
      const projected = projectPoint(intr, pose, center as Vec3);
      if (!projected) continue;
      const sizePx = (meta.voxel_size * intr.fy) / projected.depth;
      if (sizePx < 1.5) continue;
      out.push({
        depth: projected.depth,
        draw: (c) => {
          c.globalAlpha = 0.35;
          c.fillStyle = pattern;
          c.fillRect(projected.u - sizePx / 2, projected.v - sizePx / 2, sizePx, sizePx);
          c.globalAlpha = 1;
        },
      });
    }
  }

  private drawHud(
    ctx: CanvasRenderingContext2D,
    snapshot: Snapshot | null,
    hud: { connection: string; atBoundary: boolean },
  ): void {
    ctx.fillStyle = "rgba(17, 24, 39, 0.75)";
    ctx.fillRect(8, 8, 250, 86);
    ctx.fillStyle = "#f9fafb";
    ctx.font = "13px system-ui, sans-serif";
    const lines = snapshot
      ? [
          `remaining subsurfaces: ${snapshot.remaining_subsurfaces}`,
          `unobserved fraction: ${snapshot.unobserved_fraction.toFixed(3)}`,
          `frames ${snapshot.frames} / keyframes ${snapshot.keyframes}`,
          `connection: ${hud.connection}`,
        ]
      : ["waiting for snapshot...", `connection: ${hud.connection}`];
    lines.forEach((line, i) => ctx.fillText(line, 16, 26 + i * 18));
    if (hud.atBoundary) {
      ctx.fillStyle = "#f87171";
      ctx.fillText("scene boundary", 16, 26 + lines.length * 18);
    }
  }
}

function dot3(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

function normalizeDir(v: Vec3): Vec3 {
  const n = norm(v);
  return [v[0] / n, v[1] / n, v[2] / n];
}

/** Monotone-chain convex hull in pixel space. */
export function convexHull(points: [number, number][]): [number, number][] {
  if (points.length <= 3) return points;
  const sorted = [...points].sort((a, b) => a[0] - b[0] || a[1] - b[1]);
  const crossZ = (o: number[], a: number[], b: number[]) =>
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
  const lower: [number, number][] = [];
  for (const p of sorted) {
    while (lower.length >= 2 && crossZ(lower[lower.length - 2], lower[lower.length - 1], p) <= 0)
      lower.pop();
    lower.push(p);
  }
  const upper: [number, number][] = [];
  for (const p of [...sorted].reverse()) {
    while (upper.length >= 2 && crossZ(upper[upper.length - 2], upper[upper.length - 1], p) <= 0)
      upper.pop();
    upper.push(p);
  }
  return [...lower.slice(0, -1), ...upper.slice(0, -1)];
}
