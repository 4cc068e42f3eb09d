"""Shared fixtures: small scene builders and the session-scoped golden window."""

from __future__ import annotations

import numpy as np
import pytest

from vcd.ingest import (
    BoundingBox,
    DepthField,
    EgoState,
    EntityClass,
    FrameObservation,
    SurfaceMap,
    TrackedEntity,
    VideoManifest,
)
from vcd.scene import compile_scene
from vcd.synth import crossing_window


def make_surface(w: int, h: int, rects: dict[str, tuple[int, int, int, int]]) -> SurfaceMap:
    """Surface map from label -> (x0, y0, x1, y1) rectangles (later wins)."""
    codes = np.zeros((h, w), dtype=np.uint8)
    legend = {0: "none"}
    for i, (label, (x0, y0, x1, y1)) in enumerate(rects.items(), start=1):
        legend[i] = label
        codes[y0:y1, x0:x1] = i
    return SurfaceMap(width=w, height=h, codes=codes, legend=legend)


def make_depth(w: int, h: int, fill: float = np.nan, patches: list | None = None) -> DepthField:
    depth = np.full((h, w), fill, dtype=np.float32)
    for (x0, y0, x1, y1, value) in patches or []:
        depth[y0:y1, x0:x1] = value
    return DepthField(width=w, height=h, depth=depth)


def pedestrian(pid: int, bbox: BoundingBox, conf: float = 0.9) -> TrackedEntity:
    return TrackedEntity(pid, EntityClass.PEDESTRIAN, bbox, conf)


def make_obs(
    frame: int,
    entities,
    surfaces: SurfaceMap,
    depth: DepthField,
    fps: float = 30.0,
) -> FrameObservation:
    return FrameObservation(
        frame_index=frame,
        timestamp=frame / fps,
        entities=tuple(entities),
        surfaces=surfaces,
        depth=depth,
        ego=EgoState(),
    )


def small_manifest(w: int = 120, h: int = 90, fps: float = 30.0, video_id: str = "clip") -> VideoManifest:
    return VideoManifest(video_id=video_id, fps=fps, width=w, height=h, hfov_deg=90.0)


@pytest.fixture(scope="session")
def crossing():
    """The 61-frame golden window: (observations, manifest, compiled scene)."""
    observations, manifest = crossing_window()
    scene = compile_scene(observations, manifest)
    return observations, manifest, scene
