// Session client: one websocket, one session, a message log auditing that
// every visual change the app makes was driven by a server message.

import {
  controlMessage,
  gazeMessage,
  parseMessage,
  MessageLog,
  type FramePayload,
  type HelloPayload,
  type TransitionPayload,
  type WireMessage,
} from "./wire.js";

// The slice of WebSocket the client uses; tests substitute a fake.
export interface SocketLike {
  send(data: string): void;
  close(): void;
  onmessage: ((ev: { data: string }) => void) | null;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
  onerror: ((ev: unknown) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export type ConnectionStatus = "idle" | "connecting" | "open" | "closed" | "error";

export interface ViewerState {
  status: ConnectionStatus;
  hello: HelloPayload | null;
  lastFrame: FramePayload | null;
  playing: boolean;
  framesReceived: number;
  transitionsReceived: number;
}

export class SessionClient {
  readonly log = new MessageLog();
  readonly state: ViewerState = {
    status: "idle",
    hello: null,
    lastFrame: null,
    playing: false,
    framesReceived: 0,
    transitionsReceived: 0,
  };

  onFrame: ((frame: FramePayload) => void) | null = null;
  onTransition: ((t: TransitionPayload) => void) | null = null;
  onStatus: ((status: ConnectionStatus) => void) | null = null;
  onEndOfClip: (() => void) | null = null;

  private socket: SocketLike | null = null;
  private pendingHello: {
    resolve: (h: HelloPayload) => void;
    reject: (e: Error) => void;
  } | null = null;

  constructor(private readonly factory: SocketFactory) {}

  connect(url: string): Promise<void> {
    this.setStatus("connecting");
    return new Promise((resolve, reject) => {
      let settled = false;
      const socket = this.factory(url);
      this.socket = socket;
      socket.onopen = () => {
        settled = true;
        this.setStatus("open");
        resolve();
      };
      socket.onerror = () => {
        this.setStatus("error");
        if (!settled) {
          settled = true;
          reject(new Error(`cannot reach ${url}`));
        }
      };
      socket.onclose = () => {
        this.setStatus("closed");
        this.pendingHello?.reject(new Error("connection closed"));
        this.pendingHello = null;
        if (!settled) {
          settled = true;
          reject(new Error(`connection to ${url} closed`));
        }
      };
      socket.onmessage = (ev) => this.handleMessage(ev.data);
    });
  }

  /** Open a session; resolves with the hello payload or rejects on error. */
  openSession(videoId: string, mode: "live_gaze" | "replay_gaze" = "live_gaze"): Promise<HelloPayload> {
    const socket = this.requireSocket();
    return new Promise((resolve, reject) => {
      this.pendingHello = { resolve, reject };
      socket.send(controlMessage("open", { video_id: videoId, mode }));
    });
  }

  play(rateHz: number): void {
    this.requireSocket().send(controlMessage("play", { rate_hz: rateHz }));
    this.state.playing = true;
  }

  pause(): void {
    this.requireSocket().send(controlMessage("pause"));
    this.state.playing = false;
  }

  seek(frame: number): void {
    this.requireSocket().send(controlMessage("seek", { frame }));
  }

  sendGaze(t: number, x: number, y: number, valid = true): void {
    this.requireSocket().send(gazeMessage(t, x, y, valid));
  }

  close(): void {
    this.socket?.close();
    this.socket = null;
  }

  /** Record that the app drew something; audited against server messages. */
  noteRender(detail: string): void {
    this.log.recordRender(detail);
  }

  private requireSocket(): SocketLike {
    if (this.socket === null || this.state.status !== "open") {
      throw new Error("no open connection");
    }
    return this.socket;
  }

  private setStatus(status: ConnectionStatus): void {
    this.state.status = status;
    this.onStatus?.(status);
  }

  private handleMessage(raw: string): void {
    let msg: WireMessage;
    try {
      msg = parseMessage(raw);
    } catch (err) {
      console.warn(String(err));
      return;
    }
    this.log.recordServer(msg);
    switch (msg.type) {
      case "hello": {
        const hello = msg.payload as unknown as HelloPayload;
        this.state.hello = hello;
        this.pendingHello?.resolve(hello);
        this.pendingHello = null;
        break;
      }
      case "error": {
        const reason = String(msg.payload.reason ?? "unknown error");
        if (this.pendingHello) {
          this.pendingHello.reject(new Error(reason));
          this.pendingHello = null;
        } else {
          console.warn(`server error: ${reason}`);
        }
        break;
      }
      case "frame": {
        const frame = msg.payload as unknown as FramePayload;
        this.state.lastFrame = frame;
        this.state.framesReceived += 1;
        this.onFrame?.(frame);
        break;
      }
      case "transition": {
        const transition = msg.payload as unknown as TransitionPayload;
        this.state.transitionsReceived += 1;
        this.onTransition?.(transition);
        break;
      }
      case "control": {
        if (msg.payload.action === "end_of_clip") {
          this.state.playing = false;
          this.onEndOfClip?.();
        }
        break;
      }
      case "gaze":
        break;
    }
  }
}

export interface VideoEntry {
  video_id: string;
  n_windows: number;
  completed: number;
}

export async function listVideos(
  serverUrl: string,
  fetchFn: typeof fetch = fetch,
): Promise<VideoEntry[]> {
  const resp = await fetchFn(`${serverUrl.replace(/\/$/, "")}/videos`);
  if (!resp.ok) throw new Error(`GET /videos failed: ${resp.status}`);
  const body = (await resp.json()) as { videos: VideoEntry[] };
  return body.videos;
}
