// Thin client for the guidance backend's documented endpoints.

import { PoseJson, IntrinsicsJson, SceneJson } from "./math.js";
import { Delta, Snapshot } from "./state.js";

export interface SessionInfo {
  session_id: string;
  config: Record<string, unknown>;
  intrinsics: IntrinsicsJson;
}

export interface PoseAck {
  accepted: boolean;
  frame_index: number | null;
  reason: string | null;
}

export class BackendClient {
  constructor(private base: string = "") {}

  async createSession(sceneName = "desk"): Promise<SessionInfo> {
    const response = await fetch(`${this.base}/v1/session`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ scene_name: sceneName, interactive: true }),
    });
    if (!response.ok) throw new Error(`create session failed: ${response.status}`);
    return response.json();
  }

  async getScene(sessionId: string): Promise<SceneJson> {
    const response = await fetch(`${this.base}/v1/session/${sessionId}/scene`);
    if (!response.ok) throw new Error(`scene fetch failed: ${response.status}`);
    return response.json();
  }

  async getState(sessionId: string): Promise<Snapshot> {
    const response = await fetch(`${this.base}/v1/session/${sessionId}/state`);
    if (!response.ok) throw new Error(`state fetch failed: ${response.status}`);
    return response.json();
  }

  async postPose(sessionId: string, pose: PoseJson, timestamp: number): Promise<PoseAck> {
    const response = await fetch(`${this.base}/v1/session/${sessionId}/pose`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ pose, timestamp }),
    });
    if (!response.ok) throw new Error(`pose rejected: ${response.status}`);
    return response.json();
  }

  /** Subscribe to the event stream; returns a close function. */
  openEvents(
    sessionId: string,
    onSnapshot: (snapshot: Snapshot) => void,
    onDelta: (delta: Delta) => void,
    onClose: () => void,
  ): () => void {
    const scheme = location.protocol === "https:" ? "wss" : "ws";
    const host = this.base ? new URL(this.base).host : location.host;
    const socket = new WebSocket(`${scheme}://${host}/v1/session/${sessionId}/events`);
    socket.onmessage = (message) => {
      const parsed = JSON.parse(message.data);
      if (parsed.kind === "snapshot") onSnapshot(parsed.state);
      else if (parsed.kind === "delta") onDelta(parsed.event);
    };
    socket.onclose = onClose;
    socket.onerror = onClose;
    return () => socket.close();
  }
}
