"""Synthetic fixture construction for tests, demos, and the viewer.

Two fixtures are built here:

- the crossing-scene window, an in-memory 61-frame sequence engineered so the
  compiled scene documents land on exact reference values (region pixel
  areas, fusion range maps, totals);
- a small on-disk demo clip (10 s) with one crossing and one standing
  pedestrian, used by the replay CLI, the gateway, and the end-to-end tests.

Masks are filled by exact pixel budget: rows of a designated rectangle are
painted top-down and the final partial row is cut to hit the target count.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from . import ingest
from .ingest import (
    BoundingBox,
    DepthField,
    EgoState,
    EntityClass,
    FrameObservation,
    SurfaceMap,
    TrackedEntity,
    VideoManifest,
)

CROSSING_W, CROSSING_H = 1152, 768
CROSSING_LEGEND = {0: "none", 1: "road_0", 2: "sidewalk_0", 3: "sidewalk_1"}


def fill_region(codes: np.ndarray, code: int, x0: int, x1: int, y0: int, count: int) -> None:
    """Paint ``count`` pixels of ``code`` into rows of [x0, x1) from y0 down."""
    width = x1 - x0
    if width <= 0 or count < 0:
        raise ValueError("bad fill region")
    y = y0
    remaining = count
    while remaining > 0:
        if y >= codes.shape[0]:
            raise ValueError(f"fill overflows image: {remaining} pixels left")
        row = min(width, remaining)
        if np.any(codes[y, x0:x0 + row]):
            raise ValueError(f"fill collision at row {y}")
        codes[y, x0:x0 + row] = code
        remaining -= row
        y += 1


def crossing_surface_codes() -> np.ndarray:
    """Label image whose regions hit the reference pixel budgets exactly."""
    codes = np.zeros((CROSSING_H, CROSSING_W), dtype=np.uint8)
    # road_0: 252945 total, split across the center column so the occupied
    # lower (close-front) cells outweigh the upper (far-front) ones.
    fill_region(codes, 1, 384, 768, 0, 122945)     # far-front chunk
    fill_region(codes, 1, 384, 768, 474, 112896)   # close-front slab (full rect)
    fill_region(codes, 1, 470, 768, 389, 17104)    # close-front filler
    # sidewalk_0: 58185 = small close-front ledge + large lower-right block.
    fill_region(codes, 2, 384, 470, 384, 7740)
    fill_region(codes, 2, 768, 960, 384, 50445)
    # sidewalk_1: 55574 across lower-right and upper-right.
    fill_region(codes, 3, 960, 1152, 384, 35574)
    fill_region(codes, 3, 960, 1152, 0, 20000)
    return codes


def _crossing_track(frame: int) -> list[TrackedEntity]:
    entities: list[TrackedEntity] = []
    if frame <= 50:
        if frame <= 20:
            cx = cy = 309.0 + 3.0 * frame
        else:
            cx = cy = 404.0 + 4.0 * (frame - 21)
        entities.append(
            TrackedEntity(
                8,
                EntityClass.PEDESTRIAN,
                BoundingBox(cx - 100.0, cy - 100.0, 200.0, 200.0),
                0.9,
            )
        )
    w12 = 100.0 if frame == 60 else 200.0
    entities.append(
        TrackedEntity(
            12,
            EntityClass.PEDESTRIAN,
            BoundingBox(369.0 - w12 / 2.0, 330.0 - 270.46 / 2.0, w12, 270.46),
            0.9,
        )
    )
    if frame <= 9:
        for i, vid in enumerate((1, 2, 3, 4, 5, 6, 7, 9, 10, 11)):
            entities.append(
                TrackedEntity(
                    vid,
                    EntityClass.VEHICLE,
                    BoundingBox(500.0 + 12.0 * i, 40.0, 40.0, 30.0),
                    0.9,
                )
            )
    return sorted(entities, key=lambda e: e.id)


def _crossing_depth(frame: int) -> np.ndarray:
    depth = np.full((CROSSING_H, CROSSING_W), np.nan, dtype=np.float32)
    depth[195:208, 300:440] = 17.0  # standing pedestrian's patch, id 12
    if frame <= 50:
        if frame <= 20:
            c = int(309 + 3 * frame)
            value = 8.7
        else:
            c = int(404 + 4 * (frame - 21))
            value = 3.2
        depth[c - 6:c + 6, c - 6:c + 6] = value  # crossing pedestrian, id 8
    return depth


def crossing_manifest() -> VideoManifest:
    return VideoManifest(
        video_id="video_16",
        fps=30.0,
        width=CROSSING_W,
        height=CROSSING_H,
        hfov_deg=90.0,
        n_frames=61,
    )


def crossing_window() -> tuple[list[FrameObservation], VideoManifest]:
    """The 61-frame crossing scene as in-memory observations."""
    manifest = crossing_manifest()
    surfaces = SurfaceMap(
        width=CROSSING_W,
        height=CROSSING_H,
        codes=crossing_surface_codes(),
        legend=dict(CROSSING_LEGEND),
    )
    observations = []
    for f in range(61):
        observations.append(
            FrameObservation(
                frame_index=f,
                timestamp=f / manifest.fps,
                entities=tuple(_crossing_track(f)),
                surfaces=surfaces,
                depth=DepthField(CROSSING_W, CROSSING_H, _crossing_depth(f)),
                ego=EgoState(32.0, "14:05:00", ingest.NavDirection.STRAIGHT),
            )
        )
    return observations, manifest


def crossing_tracks() -> list[tuple[int, list[TrackedEntity]]]:
    return [(f, _crossing_track(f)) for f in range(61)]


# --- demo clip ------------------------------------------------------------------

DEMO_W, DEMO_H = 384, 216
DEMO_LEGEND = {0: "none", 1: "road_0", 2: "sidewalk_0"}

DEMO_RESPONSE = """\
### Scene
Suburban street; one pedestrian crosses toward the roadway while another
stands on the sidewalk.

#### Potential Risks
Person 8 moves quickly toward the road, likely to cross.
Person 12 stands still on the sidewalk; no immediate risk.

#### Safety Evaluation
Person 8 : Risky
Person 12 : Safe
"""


def _demo_surface_codes() -> np.ndarray:
    codes = np.zeros((DEMO_H, DEMO_W), dtype=np.uint8)
    codes[108:216, 96:256] = 1   # road_0
    codes[108:216, 256:384] = 2  # sidewalk_0
    return codes


def _demo_entities(frame: int) -> list[TrackedEntity]:
    cx8 = 321.0 - 0.8 * frame
    return [
        TrackedEntity(
            8, EntityClass.PEDESTRIAN, BoundingBox(cx8 - 12.0, 126.0, 24.0, 48.0), 0.88
        ),
        TrackedEntity(
            12, EntityClass.PEDESTRIAN, BoundingBox(328.0, 116.0, 24.0, 48.0), 0.92
        ),
    ]


def _demo_depth(frame: int) -> np.ndarray:
    depth = np.full((DEMO_H, DEMO_W), np.nan, dtype=np.float32)
    cx8 = int(321 - 0.8 * frame)
    depth[146:154, cx8 - 4:cx8 + 4] = 4.0
    depth[136:144, 336:344] = 18.0
    return depth


def demo_fixture(
    out_dir: Path | str,
    seconds: float = 10.0,
    fps: float = 30.0,
    window_s: float = 2.0,
    sample_hz: float = 2.0,
    video_id: str = "demo_crossing",
) -> Path:
    """Write a small on-disk fixture plus a mock-response file.

    Masks and depth fields are materialized only for the frames the causal
    windows actually sample; the track file covers every frame.
    """
    from .replay import cut_windows

    root = Path(out_dir) / video_id
    (root / ingest.MASK_DIR).mkdir(parents=True, exist_ok=True)
    (root / ingest.DEPTH_DIR).mkdir(parents=True, exist_ok=True)

    n_frames = int(round(seconds * fps))
    manifest = VideoManifest(
        video_id=video_id,
        fps=fps,
        width=DEMO_W,
        height=DEMO_H,
        hfov_deg=90.0,
        n_frames=n_frames,
    )
    ingest.write_manifest(manifest, root / ingest.MANIFEST_NAME)
    (root / ingest.LEGEND_NAME).write_text(
        json.dumps({str(k): v for k, v in DEMO_LEGEND.items()}, indent=2) + "\n"
    )
    ingest.write_track_file(
        [(f, _demo_entities(f)) for f in range(n_frames)], root / ingest.TRACKS_NAME
    )

    sampled: set[int] = set()
    for window in cut_windows(manifest, window_s, sample_hz, n_frames=n_frames):
        sampled.update(window.sampled_frames)
    codes = _demo_surface_codes()
    surface = SurfaceMap(DEMO_W, DEMO_H, codes, dict(DEMO_LEGEND))
    for f in sorted(sampled):
        ingest.write_surface_map(surface, root / ingest.MASK_DIR / ingest.frame_mask_name(f))
        ingest.write_depth_field(
            DepthField(DEMO_W, DEMO_H, _demo_depth(f)),
            root / ingest.DEPTH_DIR / ingest.frame_depth_name(f),
        )

    responses = {"default": DEMO_RESPONSE}
    (Path(out_dir) / "responses.json").write_text(json.dumps(responses, indent=2) + "\n")
    return root
