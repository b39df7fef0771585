// Client-side session state: a snapshot plus the pure reducer that applies
// server deltas. Must stay semantically identical to the server's reducer;
// the fixture test replays a recorded stream and compares final states.

export interface SubsurfaceJson {
  dir: number[];
  covered: boolean;
}

export interface SphereJson {
  id: string;
  center: number[];
  radius: number;
  category: string;
  created_at?: number;
  subsurfaces: SubsurfaceJson[];
}

export interface GridMeta {
  origin: number[];
  voxel_size: number;
  dims: number[];
}

export interface Snapshot {
  seq: number;
  clock: number;
  frames: number;
  keyframes: number;
  spheres: SphereJson[];
  remaining_subsurfaces: number;
  unobserved_fraction: number;
  grid_rle: string;
  grid_meta: GridMeta;
}

export type Delta =
  | { seq: number; type: "frame_accepted"; t: number; frame_index: number; is_keyframe: boolean }
  | { seq: number; type: "sphere_added"; sphere: SphereJson }
  | { seq: number; type: "spheres_merged"; removed: string[]; sphere: SphereJson }
  | { seq: number; type: "coverage_marked"; sphere_id: string; indices: number[] }
  | {
      seq: number;
      type: "status";
      remaining_subsurfaces: number;
      unobserved_fraction: number;
      grid_rle: string;
    };

export type ConnectionStatus = "connecting" | "live" | "closed";

export interface ClientState {
  snapshot: Snapshot | null;
  connection: ConnectionStatus;
}

export function applyDelta(state: Snapshot, delta: Delta): Snapshot {
  if (delta.seq <= state.seq) return state;
  const next: Snapshot = JSON.parse(JSON.stringify(state));
  next.seq = delta.seq;
  const spheres = new Map(next.spheres.map((s) => [s.id, s]));
  switch (delta.type) {
    case "frame_accepted":
      next.frames += 1;
      if (delta.is_keyframe) next.keyframes += 1;
      next.clock = delta.t;
      break;
    case "sphere_added":
      spheres.set(delta.sphere.id, delta.sphere);
      break;
    case "spheres_merged":
      for (const id of delta.removed) spheres.delete(id);
      spheres.set(delta.sphere.id, delta.sphere);
      break;
    case "coverage_marked": {
      const sphere = spheres.get(delta.sphere_id);
      if (sphere) {
        for (const index of delta.indices) sphere.subsurfaces[index].covered = true;
      }
      break;
    }
    case "status":
      next.remaining_subsurfaces = delta.remaining_subsurfaces;
      next.unobserved_fraction = delta.unobserved_fraction;
      next.grid_rle = delta.grid_rle;
      break;
  }
  next.spheres = [...spheres.values()].sort((a, b) => (a.id < b.id ? -1 : a.id > b.id ? 1 : 0));
  return next;
}

export function applyStream(initial: Snapshot, deltas: Delta[]): Snapshot {
  let state = initial;
  for (const delta of deltas) state = applyDelta(state, delta);
  return state;
}

export function remainingSubsurfaces(snapshot: Snapshot): number {
  return snapshot.remaining_subsurfaces;
}

/** Decode the "state count state count ..." grid encoding. */
export function decodeGridRle(rle: string, voxelCount: number): Uint8Array {
  const out = new Uint8Array(voxelCount);
  if (!rle) return out;
  const parts = rle.split(" ");
  let cursor = 0;
  for (let i = 0; i + 1 < parts.length; i += 2) {
    const value = Number(parts[i]);
    const count = Number(parts[i + 1]);
    out.fill(value, cursor, cursor + count);
    cursor += count;
  }
  return out;
}

export const VOXEL_UNKNOWN = 0;

/** World centers of unknown voxels, subsampled to at most `cap` entries
 * (rendering budget for the striped overlay). */
export function unknownVoxelCenters(
  meta: GridMeta,
  states: Uint8Array,
  cap = 4000,
): [number, number, number][] {
  const [nx, ny, nz] = meta.dims;
  const centers: [number, number, number][] = [];
  const total = nx * ny * nz;
  let unknownTotal = 0;
  for (let i = 0; i < total; i++) if (states[i] === VOXEL_UNKNOWN) unknownTotal++;
  const stepEvery = Math.max(1, Math.ceil(unknownTotal / cap));
  let seen = 0;
  for (let x = 0; x < nx; x++) {
    for (let y = 0; y < ny; y++) {
      for (let z = 0; z < nz; z++) {
        const flat = (x * ny + y) * nz + z;
        if (states[flat] !== VOXEL_UNKNOWN) continue;
        if (seen++ % stepEvery !== 0) continue;
        centers.push([
          meta.origin[0] + (x + 0.5) * meta.voxel_size,
          meta.origin[1] + (y + 0.5) * meta.voxel_size,
          meta.origin[2] + (z + 0.5) * meta.voxel_size,
        ]);
      }
    }
  }
  return centers;
}
