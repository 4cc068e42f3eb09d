// Wire schema shared with the gateway: every server message is
// { type, session_id, seq, payload } with a strictly increasing seq.

export type MessageType = "hello" | "frame" | "gaze" | "transition" | "control" | "error";

export interface WireMessage {
  type: MessageType;
  session_id: string;
  seq: number;
  payload: Record<string, unknown>;
}

export interface HelloPayload {
  video_id: string;
  mode: string;
  n_frames: number;
  fps: number;
  width: number;
  height: number;
  schema_version: number;
}

export type Primitive =
  | { shape: "triangle_hollow"; color: string; x: number; y: number; w: number; h: number; scale: number; sign: number }
  | { shape: "corner_rect"; color: string; x: number; y: number; w: number; h: number; scale: number; sign: number }
  | { shape: "triangle_solid"; color: string; x: number; y: number; w: number; h: number; scale: number; sign: number }
  | { shape: "arc"; color: string; bearing: number; sign: number }
  | { shape: "basics"; x: number; y: number; w: number; h: number; speed_kmh: number; clock: string; nav: string };

export interface FramePayload {
  frame_index: number;
  t: number;
  display_list: Primitive[];
  discontinuity: boolean;
}

export interface TransitionPayload {
  t: number;
  sign: number;
  from: string;
  to: string;
  cause: "gaze" | "report" | "escalation";
}

const TYPES: ReadonlySet<string> = new Set([
  "hello", "frame", "gaze", "transition", "control", "error",
]);

export function parseMessage(raw: string): WireMessage {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    throw new Error("wire: not JSON");
  }
  const msg = data as Partial<WireMessage>;
  if (typeof msg !== "object" || msg === null) throw new Error("wire: not an object");
  if (typeof msg.type !== "string" || !TYPES.has(msg.type)) {
    throw new Error(`wire: unknown type ${String(msg.type)}`);
  }
  if (typeof msg.seq !== "number") throw new Error("wire: missing seq");
  if (typeof msg.payload !== "object" || msg.payload === null) {
    throw new Error("wire: missing payload");
  }
  return msg as WireMessage;
}

export function controlMessage(action: string, extra: Record<string, unknown> = {}) {
  return JSON.stringify({ type: "control", payload: { action, ...extra } });
}

export function gazeMessage(t: number, x: number, y: number, valid = true) {
  return JSON.stringify({ type: "gaze", payload: { t, x, y, valid } });
}

/**
 * Audit trail supporting the viewer's core invariant: the viewer is
 * stateless about risk logic, so every visual change must be preceded by a
 * server message. Server messages and local renders land in one ordered log.
 */
export class MessageLog {
  readonly entries: Array<{ kind: "server" | "render"; detail: string; seq?: number }> = [];
  private lastSeq = 0;

  recordServer(msg: WireMessage): void {
    if (msg.seq <= this.lastSeq) {
      throw new Error(`wire: seq ${msg.seq} not increasing (last ${this.lastSeq})`);
    }
    this.lastSeq = msg.seq;
    this.entries.push({ kind: "server", detail: msg.type, seq: msg.seq });
  }

  recordRender(detail: string): void {
    this.entries.push({ kind: "render", detail });
  }

  /** True when every render entry has a server entry somewhere before it. */
  rendersFollowServerMessages(): boolean {
    let seenServer = false;
    for (const e of this.entries) {
      if (e.kind === "server") seenServer = true;
      else if (!seenServer) return false;
    }
    return true;
  }
}
