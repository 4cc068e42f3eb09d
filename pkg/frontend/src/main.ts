// Browser entry point: wires the canvas, playback controls, pointer-as-gaze
// toggle, and the session client together. All sign state comes from the
// server; this file only routes messages to the renderer.

import { SessionClient, listVideos } from "./client.js";
import { PointerGazeStream } from "./gaze.js";
import { renderDisplayList, type RenderTarget } from "./renderer.js";
import type { FramePayload, TransitionPayload } from "./wire.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const canvas = $("overlay") as unknown as HTMLCanvasElement;
const banner = $("banner");
const videoSelect = $("videos") as unknown as HTMLSelectElement;
const logView = $("log");
const gazeToggle = $("gaze-toggle") as unknown as HTMLInputElement;
const frameLabel = $("frame-label");

const serverInput = $("server") as unknown as HTMLInputElement;
serverInput.value = serverInput.value || "http://127.0.0.1:8000";

const client = new SessionClient((url) => new WebSocket(url) as never);
let gaze: PointerGazeStream | null = null;
let flashUntil = 0;
let lastFrame: FramePayload | null = null;

function wsUrl(server: string): string {
  return server.replace(/^http/, "ws").replace(/\/$/, "") + "/session";
}

function setBanner(text: string, kind: "info" | "error" = "info"): void {
  banner.textContent = text;
  banner.className = kind;
}

function target(): RenderTarget {
  const hello = client.state.hello;
  return {
    ctx: canvas.getContext("2d") as never,
    canvasW: canvas.width,
    canvasH: canvas.height,
    videoW: hello?.width ?? canvas.width,
    videoH: hello?.height ?? canvas.height,
  };
}

function appendLog(line: string): void {
  const div = document.createElement("div");
  div.textContent = line;
  logView.appendChild(div);
  while (logView.childElementCount > 200) logView.removeChild(logView.firstChild!);
  logView.scrollTop = logView.scrollHeight;
}

client.onFrame = (frame: FramePayload) => {
  lastFrame = frame;
  renderDisplayList(target(), frame.display_list);
  client.noteRender(`frame ${frame.frame_index}`);
  frameLabel.textContent = `frame ${frame.frame_index} @ ${frame.t.toFixed(2)}s`;
  if (performance.now() < flashUntil) {
    canvas.style.outline = "3px solid #fdd835";
  } else {
    canvas.style.outline = "none";
  }
};

client.onTransition = (t: TransitionPayload) => {
  appendLog(`server transition: sign ${t.sign} ${t.from} -> ${t.to} (${t.cause})`);
  // Brief highlight; the actual collapse arrives in the next frame message.
  flashUntil = performance.now() + 250;
};

client.onStatus = (status) => {
  if (status === "closed" && lastFrame !== null) {
    setBanner("connection lost — state frozen; press Connect to retry", "error");
  }
};

client.onEndOfClip = () => setBanner("end of clip");

$("connect").onclick = async () => {
  const server = serverInput.value;
  try {
    setBanner("connecting...");
    const videos = await listVideos(server);
    videoSelect.innerHTML = "";
    for (const v of videos) {
      const opt = document.createElement("option");
      opt.value = v.video_id;
      opt.textContent = `${v.video_id} (${v.completed}/${v.n_windows} windows)`;
      videoSelect.appendChild(opt);
    }
    if (videos.length === 0) {
      setBanner("server has no replayed videos", "error");
      return;
    }
    await client.connect(wsUrl(server));
    const hello = await client.openSession(videoSelect.value, "live_gaze");
    setBanner(`session open: ${hello.video_id}, ${hello.n_frames} frames — paused at 0`);
    gaze?.stop();
    gaze = new PointerGazeStream((t, x, y, valid) => client.sendGaze(t, x, y, valid));
  } catch (err) {
    setBanner(String(err), "error");
  }
};

$("play").onclick = () => client.play(30);
$("pause").onclick = () => client.pause();
$("restart").onclick = () => client.seek(0);

gazeToggle.onchange = () => {
  if (!gaze) return;
  if (gazeToggle.checked) gaze.start();
  else gaze.stop();
};

canvas.addEventListener("pointermove", (ev: PointerEvent) => {
  if (!gaze || !gaze.running) return;
  const rect = canvas.getBoundingClientRect();
  gaze.update((ev.clientX - rect.left) / rect.width, (ev.clientY - rect.top) / rect.height);
});

canvas.addEventListener("pointerleave", () => {
  gaze?.update(0, 0, false);
});

setBanner("enter the gateway address and press Connect");
