"""Session service: stream display lists to the viewer, accept live gaze.

One websocket connection at ``/session`` carries one session. The client
opens with a control message naming the video and mode; the server answers
``hello`` and then speaks the shared wire schema: every server message is
``{"type", "session_id", "seq", "payload"}`` with a strictly increasing
per-session sequence number. Gaze is handled synchronously, so a transition
it causes is always on the wire before the next ``frame`` message.

The playback clock is server-authoritative: the viewer renders exactly what
it is sent and never synthesizes sign state locally.
"""

from __future__ import annotations

import asyncio
import json
import logging
import uuid
from dataclasses import replace
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .hud import GazeSample, HudConfig, HudEngine, render_model
from .ingest import VideoFixtures
from .replay import cut_windows
from .risk import report_from_wire
from .rendering_schema import SCHEMA_VERSION

log = logging.getLogger(__name__)


class SessionError(RuntimeError):
    pass


class Session:
    """Replay state machine for one viewer connection."""

    def __init__(
        self,
        session_id: str,
        run_dir: Path,
        mode: str,
        fixtures_dir: Optional[Path] = None,
        hud_config: HudConfig = HudConfig(),
    ):
        if mode not in ("replay_gaze", "live_gaze"):
            raise SessionError(f"unknown mode {mode!r}")
        summary_path = run_dir / "summary.json"
        if not summary_path.exists():
            raise SessionError(f"no run summary under {run_dir}")
        self.summary = json.loads(summary_path.read_text())
        self.session_id = session_id
        self.mode = mode
        self.run_dir = run_dir
        self.fixtures = VideoFixtures(fixtures_dir or Path(self.summary["fixtures"]))
        self.manifest = self.fixtures.manifest
        self.hud_config = hud_config
        self.windows = cut_windows(
            self.manifest,
            self.summary["window_s"],
            self.summary["sample_hz"],
            n_frames=self.fixtures.n_frames,
        )
        self.reports = [self._load_report(i) for i in range(len(self.windows))]
        self.cursor = 0
        self.playing = False
        self.epoch = 0.0
        self._last_gaze_t: Optional[float] = None
        self._engine = HudEngine(self.manifest, hud_config)
        self._applied = 0

    def _load_report(self, index: int):
        path = self.run_dir / f"window_{index:04d}" / "risks.json"
        if not path.exists():
            return None
        return report_from_wire(json.loads(path.read_text()))

    @property
    def n_frames(self) -> int:
        return self.fixtures.n_frames

    def _ensure_applied(self, cursor: int) -> list:
        """Apply every window report whose window has started by ``cursor``."""
        events = []
        while (
            self._applied < len(self.windows)
            and self.windows[self._applied].start_frame <= cursor
        ):
            idx = self._applied
            report = self.reports[idx]
            if report is not None:
                anchor = self.windows[idx].sampled_frames[-1]
                obs = self.fixtures.load_window([anchor])[0]
                events.extend(self._engine.apply_report(report, obs))
            self._applied += 1
        return events

    def seek(self, frame: int) -> None:
        frame = max(0, min(frame, self.n_frames - 1))
        if frame < self.cursor:
            # Determinism over speed: rebuild the sign machine from scratch.
            self._engine = HudEngine(self.manifest, self.hud_config)
            self._applied = 0
        self.cursor = frame

    def advance(self) -> tuple[int, list, list]:
        """One playback tick: returns (frame_index, transitions, display list)."""
        frame = self.cursor
        transitions = self._ensure_applied(frame)
        display = self.display_list(frame)
        self.cursor = frame + 1
        return frame, transitions, display

    def display_list(self, frame: int) -> list:
        state = replace(
            self._engine.state,
            frame_index=frame,
            basics=self.fixtures.ego_at(frame),
        )
        return render_model(state, self.manifest)

    def push_gaze(self, payload: dict) -> Optional[list]:
        """Apply one gaze sample; None means the sample was held (paused)."""
        if self.mode != "live_gaze":
            raise SessionError("session is not in live_gaze mode")
        t = float(payload["t"])
        if t < self.epoch:
            raise SessionError(f"stale timestamp {t} before session epoch {self.epoch}")
        if self._last_gaze_t is not None and t < self._last_gaze_t:
            raise SessionError(f"stale timestamp {t} before last sample {self._last_gaze_t}")
        self._last_gaze_t = t
        if not self.playing:
            # Samples during pause are held out of the state machine: the
            # viewer must never see a transition while the clock is stopped.
            return None
        sample = GazeSample(
            timestamp=t,
            x=float(payload["x"]),
            y=float(payload["y"]),
            valid=bool(payload.get("valid", True)),
        )
        self._ensure_applied(self.cursor)
        return self._engine.apply_gaze([sample])


def create_app(runs_root: Path | str, fixtures_root: Optional[Path | str] = None) -> FastAPI:
    runs_root = Path(runs_root)
    app = FastAPI(title="vcd-gateway")
    # The viewer is served from its own origin during development.
    from fastapi.middleware.cors import CORSMiddleware

    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["GET"], allow_headers=["*"]
    )

    def _video_dirs() -> list[Path]:
        if not runs_root.exists():
            return []
        return sorted(p for p in runs_root.iterdir() if (p / "summary.json").exists())

    @app.get("/videos")
    def videos() -> dict:
        out = []
        for p in _video_dirs():
            summary = json.loads((p / "summary.json").read_text())
            out.append(
                {
                    "video_id": summary["video_id"],
                    "n_windows": summary["n_windows"],
                    "completed": summary["completed"],
                }
            )
        return {"videos": out, "schema_version": SCHEMA_VERSION}

    @app.websocket("/session")
    async def session_socket(ws: WebSocket) -> None:
        await ws.accept()
        seq = 0
        send_lock = asyncio.Lock()
        # Serializes state mutation + the sends that announce it, so a gaze
        # transition is always on the wire before the next frame message.
        state_lock = asyncio.Lock()
        session: Optional[Session] = None
        play_task: Optional[asyncio.Task] = None
        discontinuity = False

        async def send(type_: str, payload: dict) -> None:
            nonlocal seq
            async with send_lock:
                seq += 1
                await ws.send_text(
                    json.dumps(
                        {
                            "type": type_,
                            "session_id": session.session_id if session else "",
                            "seq": seq,
                            "payload": payload,
                        },
                        ensure_ascii=False,
                    )
                )

        async def send_transitions(events) -> None:
            for e in events:
                await send("transition", e.to_wire())

        async def play_loop(rate_hz: float) -> None:
            nonlocal discontinuity
            try:
                while session.playing:
                    async with state_lock:
                        if not session.playing:
                            return
                        if session.cursor >= session.n_frames:
                            session.playing = False
                            await send("control", {"action": "end_of_clip"})
                            return
                        frame, transitions, display = session.advance()
                        await send_transitions(transitions)
                        await send(
                            "frame",
                            {
                                "frame_index": frame,
                                "t": frame / session.manifest.fps,
                                "display_list": display,
                                "discontinuity": discontinuity,
                            },
                        )
                        discontinuity = False
                    await asyncio.sleep(1.0 / rate_hz)
            except asyncio.CancelledError:
                pass

        def stop_playback() -> None:
            nonlocal play_task
            if session is not None:
                session.playing = False
            if play_task is not None:
                play_task.cancel()
                play_task = None

        try:
            while True:
                message = await ws.receive_json()
                mtype = message.get("type")
                payload = message.get("payload", {})
                if mtype == "control":
                    action = payload.get("action")
                    if action == "open":
                        video_id = payload.get("video_id", "")
                        mode = payload.get("mode", "live_gaze")
                        run_dir = runs_root / video_id
                        try:
                            session = Session(
                                session_id=uuid.uuid4().hex[:12],
                                run_dir=run_dir,
                                mode=mode,
                                fixtures_dir=Path(fixtures_root) / video_id
                                if fixtures_root
                                else None,
                            )
                        except (SessionError, FileNotFoundError, KeyError) as exc:
                            await send("error", {"reason": f"unknown video: {exc}"})
                            continue
                        await send(
                            "hello",
                            {
                                "video_id": video_id,
                                "mode": mode,
                                "n_frames": session.n_frames,
                                "fps": session.manifest.fps,
                                "width": session.manifest.width,
                                "height": session.manifest.height,
                                "schema_version": SCHEMA_VERSION,
                            },
                        )
                    elif session is None:
                        await send("error", {"reason": "no session open"})
                    elif action == "play":
                        stop_playback()
                        session.playing = True
                        play_task = asyncio.create_task(
                            play_loop(float(payload.get("rate_hz", session.manifest.fps)))
                        )
                    elif action == "pause":
                        stop_playback()
                        await send("control", {"action": "paused", "frame": session.cursor})
                    elif action == "seek":
                        stop_playback()
                        session.seek(int(payload.get("frame", 0)))
                        discontinuity = True
                        await send("control", {"action": "seeked", "frame": session.cursor})
                    elif action == "close":
                        break
                    else:
                        await send("error", {"reason": f"unknown action {action!r}"})
                elif mtype == "gaze":
                    if session is None:
                        await send("error", {"reason": "no session open"})
                        continue
                    async with state_lock:
                        try:
                            transitions = session.push_gaze(payload)
                        except (SessionError, KeyError, ValueError) as exc:
                            await send("error", {"reason": str(exc)})
                            continue
                        if transitions is None:
                            await send(
                                "gaze", {"accepted": True, "held": True, "transitions": 0}
                            )
                        else:
                            await send_transitions(transitions)
                            await send(
                                "gaze",
                                {"accepted": True, "transitions": len(transitions)},
                            )
                else:
                    await send("error", {"reason": f"unknown message type {mtype!r}"})
        except WebSocketDisconnect:
            pass
        finally:
            stop_playback()

    return app


def serve(runs_root: Path | str, listen: str, fixtures_root: Optional[Path | str] = None) -> None:
    import uvicorn

    host, _, port = listen.partition(":")
    uvicorn.run(
        create_app(runs_root, fixtures_root),
        host=host or "127.0.0.1",
        port=int(port or 8000),
    )
