"""End-to-end replay: causal windows, latency modeling, pipeline scheduling.

Videos are cut into back-to-back causal windows (default 2 s, sampled at
2 Hz), each window flows through scene compilation, the analyst, and the HUD
engine, and per-window artifacts land in a run directory:

    run/<video_id>/window_<NNNN>/{scene.json, prompt.txt, response.txt,
                                  risks.json, hud_events.ndjson}

Latency is modeled declaratively: a profile names per-stage durations and
parallel groups, and the total is the sum over groups of each group's longest
stage (perception stages run side by side, analysis and HUD follow). Profiles
are inputs, never measurements, so published totals reproduce on any machine;
measured wall-clock timings are recorded separately.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import ingest
from .hud import HudConfig, HudEngine, events_to_ndjson
from .ingest import VideoFixtures, VideoManifest
from .risk import (
    DEFAULT_BUNDLE,
    DEFAULT_LOOK_BACK_S,
    GuardConfig,
    PromptBundle,
    RiskReport,
    apply_guards,
    build_prompt,
    parse_verdict,
)
from .scene import SceneDescription, compile_scene, scene_to_json

log = logging.getLogger(__name__)

STAGES = ("tracking", "grounding", "depth", "risk_analysis", "hud")
PERCEPTION_GROUP = 1


class ReplayError(RuntimeError):
    pass


@dataclass(frozen=True)
class CausalWindow:
    video_id: str
    start_frame: int
    end_frame: int  # inclusive
    sampled_frames: tuple[int, ...]
    sample_rate: float

    @property
    def interval_label(self) -> str:
        return f"{self.start_frame:04d}-{self.end_frame:04d}"


def cut_windows(
    manifest: VideoManifest,
    window_s: float = 2.0,
    sample_hz: float = 2.0,
    n_frames: Optional[int] = None,
) -> list[CausalWindow]:
    """Cut a clip into non-overlapping consecutive windows.

    Each full window samples ``floor(window_s * sample_hz)`` frames by
    nearest-frame decimation; a trailing partial window keeps coverage of the
    clip and samples proportionally (at least one frame).
    """
    if sample_hz > manifest.fps:
        raise ReplayError(
            f"sample rate {sample_hz} Hz exceeds source fps {manifest.fps}"
        )
    if sample_hz <= 0 or window_s <= 0:
        raise ReplayError("window_s and sample_hz must be positive")
    if n_frames is None:
        n_frames = manifest.n_frames
    if n_frames is None or n_frames <= 0:
        raise ReplayError("clip length unknown: pass n_frames or set it in the manifest")

    frames_per_window = int(round(window_s * manifest.fps))
    windows: list[CausalWindow] = []
    start = 0
    while start < n_frames:
        end = min(start + frames_per_window, n_frames) - 1
        duration_s = (end - start + 1) / manifest.fps
        n_samples = max(1, int(duration_s * sample_hz + 1e-9))
        sampled = []
        for i in range(n_samples):
            f = start + int(round(i / sample_hz * manifest.fps))
            sampled.append(min(f, end))
        windows.append(
            CausalWindow(
                video_id=manifest.video_id,
                start_frame=start,
                end_frame=end,
                sampled_frames=tuple(dict.fromkeys(sampled)),
                sample_rate=sample_hz,
            )
        )
        start = end + 1
    return windows


# --- latency model -------------------------------------------------------------

@dataclass(frozen=True)
class StageLatency:
    stage: str
    seconds: float
    parallel_group: int

    def __post_init__(self) -> None:
        if self.seconds < 0:
            raise ReplayError(f"stage {self.stage}: seconds must be >= 0")


@dataclass(frozen=True)
class LatencyProfile:
    label: str
    stages: tuple[StageLatency, ...]

    def stage(self, name: str) -> StageLatency:
        matches = [s for s in self.stages if s.stage == name]
        if len(matches) != 1:
            raise ReplayError(
                f"profile {self.label!r} needs exactly one {name!r} stage, found {len(matches)}"
            )
        return matches[0]


# The first-generation profile: depth estimation dominates the parallel
# perception group. The upgraded profile swaps in faster segmentation, sensor
# depth, and a lighter analysis model.
BUILTIN_PROFILES: dict[str, LatencyProfile] = {
    "paper-2023": LatencyProfile(
        label="paper-2023",
        stages=(
            StageLatency("tracking", 0.19, 1),
            StageLatency("grounding", 3.86, 1),
            StageLatency("depth", 14.97, 1),
            StageLatency("risk_analysis", 1.76, 2),
            StageLatency("hud", 0.033, 3),
        ),
    ),
    "upgraded-2025": LatencyProfile(
        label="upgraded-2025",
        stages=(
            StageLatency("tracking", 0.19, 1),
            StageLatency("grounding", 0.56, 1),
            StageLatency("depth", 0.20, 1),
            StageLatency("risk_analysis", 1.40, 2),
            StageLatency("hud", 0.33, 3),
        ),
    ),
}


def load_profile(name_or_path: str | Path) -> LatencyProfile:
    name = str(name_or_path)
    if name in BUILTIN_PROFILES:
        return BUILTIN_PROFILES[name]
    path = Path(name_or_path)
    if not path.exists():
        raise ReplayError(
            f"unknown profile {name!r}: not a builtin "
            f"({', '.join(sorted(BUILTIN_PROFILES))}) and no such file"
        )
    raw = json.loads(path.read_text())
    return LatencyProfile(
        label=raw["label"],
        stages=tuple(
            StageLatency(s["stage"], float(s["seconds"]), int(s["parallel_group"]))
            for s in raw["stages"]
        ),
    )


def total_latency(profile: LatencyProfile) -> float:
    """Groups run sequentially; stages inside a group run in parallel, so
    each group contributes its longest stage."""
    if not profile.stages:
        raise ReplayError("profile has no stages")
    profile.stage("risk_analysis")
    profile.stage("hud")
    groups: dict[int, float] = {}
    for s in profile.stages:
        groups[s.parallel_group] = max(groups.get(s.parallel_group, 0.0), s.seconds)
    return sum(groups[g] for g in sorted(groups))


def check_reaction_budget(
    total_s: float,
    ttc_floor: float,
    horizon_s: float = 4.0,
) -> tuple[str, float]:
    """Does the driver keep at least ``ttc_floor`` to react after the pipeline?

    The horizon defaults to the upper end of the emergency time-to-collision
    range (4 s); the margin is what remains of it after pipeline latency and
    the reaction floor. The boundary counts as within budget.
    """
    if ttc_floor <= 0:
        raise ReplayError("ttc_floor must be > 0")
    margin = horizon_s - total_s - ttc_floor
    verdict = "within_budget" if margin >= 0 else "over_budget"
    return verdict, margin


# --- replay ---------------------------------------------------------------------

@dataclass
class WindowResult:
    window: CausalWindow
    ok: bool
    error: Optional[str] = None
    report: Optional[RiskReport] = None


@dataclass
class ReplaySummary:
    video_id: str
    out_dir: Path
    windows: list[WindowResult] = field(default_factory=list)

    @property
    def completed(self) -> int:
        return sum(1 for w in self.windows if w.ok)

    @property
    def errored(self) -> int:
        return sum(1 for w in self.windows if not w.ok)


class _StageTimer:
    def __init__(self) -> None:
        self.samples: dict[str, list[float]] = {name: [] for name in STAGES}

    def add(self, stage: str, seconds: float) -> None:
        self.samples[stage].append(seconds)

    def profile(self, label: str) -> LatencyProfile:
        group = {"tracking": 1, "grounding": 1, "depth": 1, "risk_analysis": 2, "hud": 3}
        stages = []
        for name in STAGES:
            vals = self.samples[name]
            mean = sum(vals) / len(vals) if vals else 0.0
            stages.append(StageLatency(name, mean, group[name]))
        return LatencyProfile(label=label, stages=tuple(stages))


def _scene_frames(
    window: CausalWindow,
    previous: Optional[CausalWindow],
    fps: float,
    look_back_s: float,
) -> list[int]:
    """Current window's samples plus the previous window's tail, capped to the
    look-back horizon."""
    cutoff = window.end_frame - int(round(look_back_s * fps)) + 1
    frames = set(window.sampled_frames)
    if previous is not None:
        frames.update(f for f in previous.sampled_frames if f >= cutoff)
    return sorted(f for f in frames if f >= cutoff)


def run_replay(
    fixtures_dir: Path | str,
    out_dir: Path | str,
    service,
    window_s: float = 2.0,
    sample_hz: float = 2.0,
    look_back_s: float = DEFAULT_LOOK_BACK_S,
    guard_cfg: GuardConfig = GuardConfig(),
    bundle: PromptBundle = DEFAULT_BUNDLE,
    hud_config: HudConfig = HudConfig(),
) -> ReplaySummary:
    """Replay one video's fixtures through the full pipeline.

    Windows are processed strictly in order and each window's guarded report
    is committed to history before the next starts (the flip-suppression
    guard depends on that ordering). A failing window writes ``error.txt``
    into its directory and the run continues: faults stay isolated.
    """
    fixtures = VideoFixtures(fixtures_dir)
    manifest = fixtures.manifest
    out = Path(out_dir) / manifest.video_id
    out.mkdir(parents=True, exist_ok=True)

    windows = cut_windows(manifest, window_s, sample_hz, n_frames=fixtures.n_frames)
    summary = ReplaySummary(video_id=manifest.video_id, out_dir=out)
    history: list[RiskReport] = []
    engine = HudEngine(manifest, hud_config)
    timer = _StageTimer()

    for idx, window in enumerate(windows):
        wdir = out / f"window_{idx:04d}"
        wdir.mkdir(parents=True, exist_ok=True)
        previous = windows[idx - 1] if idx > 0 else None
        try:
            frames = _scene_frames(window, previous, manifest.fps, look_back_s)

            t0 = time.monotonic()
            tracks = [(f, fixtures.entities_at(f)) for f in frames]
            timer.add("tracking", time.monotonic() - t0)

            t0 = time.monotonic()
            surfaces = {
                f: ingest.load_surface_map(
                    fixtures.root / ingest.MASK_DIR / ingest.frame_mask_name(f),
                    fixtures.legend,
                )
                for f in frames
            }
            timer.add("grounding", time.monotonic() - t0)

            t0 = time.monotonic()
            depths = {
                f: ingest.load_depth_field(
                    fixtures.root / ingest.DEPTH_DIR / ingest.frame_depth_name(f)
                )
                for f in frames
            }
            timer.add("depth", time.monotonic() - t0)

            observations = ingest.align_streams(
                tracks, surfaces, depths, fixtures.ego, manifest, frames
            )
            scene = compile_scene(observations, manifest)
            (wdir / "scene.json").write_text(scene_to_json(scene))

            prompt = build_prompt(scene, bundle, look_back_s)
            (wdir / "prompt.txt").write_text(prompt.text)

            t0 = time.monotonic()
            result = service.complete(
                prompt, key=f"{manifest.video_id}:{window.interval_label}"
            )
            timer.add("risk_analysis", time.monotonic() - t0)
            (wdir / "response.txt").write_text(result.text)

            report = parse_verdict(result.text, scene, meta=result)
            guarded = apply_guards(report, scene, history, guard_cfg)
            history.append(guarded)
            (wdir / "risks.json").write_text(guarded.to_json())

            t0 = time.monotonic()
            current = [o for o in observations if o.frame_index in window.sampled_frames]
            events = engine.apply_report(guarded, current[-1])
            timer.add("hud", time.monotonic() - t0)
            (wdir / "hud_events.ndjson").write_text(events_to_ndjson(events))

            summary.windows.append(WindowResult(window=window, ok=True, report=guarded))
        except Exception as exc:  # noqa: BLE001 - fault isolation is the contract
            message = f"{type(exc).__name__}: {exc}\n"
            (wdir / "error.txt").write_text(message)
            log.error("window %s failed: %s", window.interval_label, exc)
            summary.windows.append(
                WindowResult(window=window, ok=False, error=message.strip())
            )

    (out / "summary.json").write_text(
        json.dumps(
            {
                "video_id": manifest.video_id,
                "fixtures": str(Path(fixtures_dir).resolve()),
                "window_s": window_s,
                "sample_hz": sample_hz,
                "look_back_s": look_back_s,
                "n_windows": len(windows),
                "completed": summary.completed,
                "errored": summary.errored,
                "windows": [
                    {
                        "index": i,
                        "interval": w.window.interval_label,
                        "sampled_frames": list(w.window.sampled_frames),
                        "ok": w.ok,
                    }
                    for i, w in enumerate(summary.windows)
                ],
            },
            indent=2,
        )
        + "\n"
    )
    measured = timer.profile(f"measured-{manifest.video_id}")
    (out / "timings.json").write_text(profile_to_json(measured))
    return summary


def profile_to_json(profile: LatencyProfile) -> str:
    return (
        json.dumps(
            {
                "label": profile.label,
                "stages": [
                    {"stage": s.stage, "seconds": s.seconds, "parallel_group": s.parallel_group}
                    for s in profile.stages
                ],
            },
            indent=2,
        )
        + "\n"
    )
