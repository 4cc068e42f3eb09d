"""Hybrid frame analysis: classify pedestrians and compile scene descriptions.

Per-frame facts (surface under the feet, distance band, speed class, six-zone
position, bearing angle) are computed independently per frame, then fused per
pedestrian into frame-range maps and aggregated with a roadside summary into a
``SceneDescription`` — the unit handed to the language-model analyst.

Two JSON documents are emitted per window, ``Info_roadside_<video_id>.json``
and ``person_fusion_<video_id>.json``. The wire vocabulary of those documents
("very close", "high"/"low", hyphenated positions, space-separated region
keys) differs from the internal enum names; ``*_WIRE`` tables own the mapping
and accept the known input aliases.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .ingest import (
    BoundingBox,
    EntityClass,
    FixtureError,
    FrameObservation,
    SurfaceMap,
    VideoManifest,
)


class SceneError(ValueError):
    """Scene compilation cannot proceed on the given window."""


class DistanceClass(Enum):
    VERY_NEAR = "very_near"
    NEAR = "near"
    MEDIUM = "medium"
    FAR = "far"
    VERY_FAR = "very_far"

    def __lt__(self, other: "DistanceClass") -> bool:
        order = list(DistanceClass)
        return order.index(self) < order.index(other)


class PositionClass(Enum):
    LOWER_LEFT = "lower-left"
    CLOSE_FRONT = "close-front"
    LOWER_RIGHT = "lower-right"
    UPPER_LEFT = "upper-left"
    FAR_FRONT = "far-front"
    UPPER_RIGHT = "upper-right"


class SpeedClass(Enum):
    SLOW = "slow"
    FAST = "fast"


# Distance bands in meters, half-open [lo, hi) so every depth maps to exactly
# one class. The far/very_far split is configuration, not measurement.
DEFAULT_DISTANCE_BANDS: tuple[tuple[float, DistanceClass], ...] = (
    (5.0, DistanceClass.VERY_NEAR),
    (10.0, DistanceClass.NEAR),
    (15.0, DistanceClass.MEDIUM),
    (30.0, DistanceClass.FAR),
    (math.inf, DistanceClass.VERY_FAR),
)

# Speed threshold in frame-widths per second; width-normalized so the class is
# resolution independent.
DEFAULT_SPEED_THRESHOLD = 0.05

DISTANCE_WIRE = {
    DistanceClass.VERY_NEAR: "very close",
    DistanceClass.NEAR: "near",
    DistanceClass.MEDIUM: "medium",
    DistanceClass.FAR: "far",
    DistanceClass.VERY_FAR: "very far",
}
DISTANCE_ALIASES = {
    "very close": DistanceClass.VERY_NEAR,
    "very near": DistanceClass.VERY_NEAR,
    "very_near": DistanceClass.VERY_NEAR,
    "near": DistanceClass.NEAR,
    "medium": DistanceClass.MEDIUM,
    "far": DistanceClass.FAR,
    "very far": DistanceClass.VERY_FAR,
    "very_far": DistanceClass.VERY_FAR,
}

SPEED_WIRE = {SpeedClass.SLOW: "low", SpeedClass.FAST: "high"}
SPEED_ALIASES = {
    "slow": SpeedClass.SLOW,
    "low": SpeedClass.SLOW,
    "fast": SpeedClass.FAST,
    "high": SpeedClass.FAST,
}

POSITION_ALIASES = {
    "lower-left": PositionClass.LOWER_LEFT,
    "close-front": PositionClass.CLOSE_FRONT,
    "front center": PositionClass.CLOSE_FRONT,
    "lower-right": PositionClass.LOWER_RIGHT,
    "upper-left": PositionClass.UPPER_LEFT,
    "far-front": PositionClass.FAR_FRONT,
    "upper-right": PositionClass.UPPER_RIGHT,
}


def classify_distance(
    depth_m: float,
    bands: Sequence[tuple[float, DistanceClass]] = DEFAULT_DISTANCE_BANDS,
) -> DistanceClass:
    """Map a metric depth onto its alert band."""
    if not math.isfinite(depth_m) or depth_m < 0:
        raise SceneError(f"depth must be finite and >= 0, got {depth_m}")
    for hi, cls in bands:
        if depth_m < hi:
            return cls
    return bands[-1][1]


def classify_position(bbox: BoundingBox, frame_w: int, frame_h: int) -> PositionClass:
    """Six-zone grid over the bbox center.

    Columns split at thirds of the width, rows at half the height; boundary
    points belong to the right/lower cell. The center column reads as
    far-front above, close-front below.
    """
    if frame_w <= 0 or frame_h <= 0:
        raise SceneError("frame must have positive area")
    cx, cy = bbox.center
    col = 0 if cx < frame_w / 3 else (1 if cx < 2 * frame_w / 3 else 2)
    lower = cy >= frame_h / 2
    grid = (
        (PositionClass.UPPER_LEFT, PositionClass.FAR_FRONT, PositionClass.UPPER_RIGHT),
        (PositionClass.LOWER_LEFT, PositionClass.CLOSE_FRONT, PositionClass.LOWER_RIGHT),
    )
    return grid[1 if lower else 0][col]


def speed_per_frame(
    track: Sequence[tuple[int, BoundingBox]],
    fps: float,
    frame_w: int,
    threshold: float = DEFAULT_SPEED_THRESHOLD,
) -> list[SpeedClass]:
    """Classify each observation of a track as slow/fast.

    Velocity is the bbox-center displacement to the next observation, scaled
    to per-second and normalized by frame width. The final observation reuses
    the previous velocity; a single-observation track is slow by convention.
    """
    if fps <= 0:
        raise SceneError("fps must be > 0")
    n = len(track)
    if n == 0:
        return []
    if n == 1:
        return [SpeedClass.SLOW]
    classes: list[SpeedClass] = []
    prev: Optional[SpeedClass] = None
    for i in range(n):
        if i < n - 1:
            (f0, b0), (f1, b1) = track[i], track[i + 1]
            dt = (f1 - f0) / fps
            if dt <= 0:
                raise SceneError(f"track frames must be strictly increasing at {f1}")
            c0, c1 = b0.center, b1.center
            v = math.hypot(c1[0] - c0[0], c1[1] - c0[1]) / dt / frame_w
            cls = SpeedClass.FAST if v > threshold else SpeedClass.SLOW
        else:
            cls = prev if prev is not None else SpeedClass.SLOW
        classes.append(cls)
        prev = cls
    return classes


def classify_speed(
    track: Sequence[tuple[int, BoundingBox]],
    fps: float,
    frame_w: int,
    threshold: float = DEFAULT_SPEED_THRESHOLD,
) -> list[tuple[tuple[int, int], SpeedClass]]:
    """Run-length merged speed classes: [((start, end), class), ...]."""
    classes = speed_per_frame(track, fps, frame_w, threshold)
    frames = [f for f, _ in track]
    return [
        ((seg[0], seg[1]), value)
        for seg, value in _run_length(frames, classes)
    ]


def assign_surface(bbox: BoundingBox, surfaces: SurfaceMap) -> Optional[str]:
    """Surface label supporting a pedestrian, from the foot strip.

    Samples the bottom 10% of the bbox at full width: feet decide the
    supporting surface, the torso often overlaps background. Majority among
    labeled pixels wins; ties break toward the larger region; a strip with no
    labeled pixel yields None.
    """
    x0, y0, x1, y1 = bbox.pixel_box(surfaces.width, surfaces.height)
    strip_h = max(1, round(0.1 * (y1 - y0)))
    strip = surfaces.codes[y1 - strip_h:y1, x0:x1]
    votes: dict[str, int] = {}
    codes, counts = np.unique(strip, return_counts=True)
    for code, count in zip(codes, counts):
        label = surfaces.legend[int(code)]
        if label != "none":
            votes[label] = votes.get(label, 0) + int(count)
    if not votes:
        return None
    best = max(votes.items(), key=lambda kv: (kv[1], surfaces.region_areas.get(kv[0], 0)))
    return best[0]


def classify_surface_side(label: str, surfaces: SurfaceMap, frame_w: int) -> str:
    """Side label for a region: sidewalks left/right, roads left/center/right."""
    cx, _ = surfaces.centroid(label)
    if label.startswith("sidewalk"):
        return "left" if cx < frame_w / 2 else "right"
    if label.startswith("road"):
        if cx < frame_w / 3:
            return "left"
        if cx < 2 * frame_w / 3:
            return "center"
        return "right"
    raise FixtureError(f"unknown region label: {label}")


def compute_bbox_angle(bbox: BoundingBox, frame_w: int, hfov_deg: float) -> float:
    """Bearing of the bbox center off the ego axis, negative = left."""
    if not (0 < hfov_deg < 180):
        raise SceneError(f"hfov_deg must lie in (0, 180), got {hfov_deg}")
    cx, _ = bbox.center
    return (cx / frame_w - 0.5) * hfov_deg


# --- fusion records ----------------------------------------------------------

RangeMap = dict[tuple[int, int], object]


@dataclass(frozen=True)
class PersonFusionRecord:
    id: int
    visible_frames: int
    traj: str
    surface: dict[tuple[int, int], Optional[str]]
    avg_depth: float
    bbox_angle: dict[tuple[int, int], float]
    distance_class: dict[tuple[int, int], DistanceClass]
    speed_class: dict[tuple[int, int], SpeedClass]
    position_class: dict[tuple[int, int], PositionClass]
    # Pipeline-internal evidence, never serialized into the wire documents.
    mean_confidence: float = 1.0
    approach_speed: float = 0.0  # frame-widths/s toward the nearest road pixel
    low_evidence: bool = False

    def final(self, attr: str):
        ranges = getattr(self, attr)
        last = max(ranges, key=lambda r: r[1])
        return ranges[last]


@dataclass(frozen=True)
class RegionSummary:
    label: str
    position: tuple[PositionClass, ...]
    area_pixels: int


@dataclass(frozen=True)
class RoadsideInfoRecord:
    regions: tuple[RegionSummary, ...]
    total_objects: int
    total_surface_area: int
    total_person_area: int


@dataclass(frozen=True)
class SceneDescription:
    video_id: str
    interval: tuple[int, int]
    roadside: RoadsideInfoRecord
    persons: tuple[PersonFusionRecord, ...]
    fps: float = 30.0

    @property
    def interval_label(self) -> str:
        return f"{self.interval[0]:04d}-{self.interval[1]:04d}"

    @property
    def span_seconds(self) -> float:
        return (self.interval[1] - self.interval[0] + 1) / self.fps

    def person(self, person_id: int) -> Optional[PersonFusionRecord]:
        for p in self.persons:
            if p.id == person_id:
                return p
        return None

    @property
    def person_ids(self) -> set[int]:
        return {p.id for p in self.persons}


def _run_length(frames: Sequence[int], values: Sequence[object]) -> list[tuple[tuple[int, int], object]]:
    """Merge consecutive equal values into inclusive (start, end) ranges.

    A gap in the frame sequence always breaks a run: a range key never spans
    frames where the id was not observed.
    """
    runs: list[tuple[tuple[int, int], object]] = []
    for f, v in zip(frames, values):
        if runs and runs[-1][1] == v and f == runs[-1][0][1] + 1:
            runs[-1] = ((runs[-1][0][0], f), v)
        else:
            runs.append(((f, f), v))
    return [(r, v) for r, v in runs]


def _segment_frames(frames: Sequence[int], series: Sequence[Sequence[object]]) -> list[tuple[int, int]]:
    """Split a frame sequence at the union of all series' change points.

    The emitted fusion maps share one segmentation per person, so a change in
    any attribute breaks every map — adjacent segments may then carry equal
    values in the others.
    """
    segments: list[tuple[int, int]] = []
    start = 0
    for i in range(1, len(frames) + 1):
        boundary = i == len(frames)
        if not boundary:
            if frames[i] != frames[i - 1] + 1:
                boundary = True
            elif any(s[i] != s[i - 1] for s in series):
                boundary = True
        if boundary:
            segments.append((frames[start], frames[i - 1]))
            start = i
    return segments


def _approach_speed(
    track: Sequence[tuple[int, FrameObservation, BoundingBox]],
    frame_w: int,
    fps: float,
    road_distance_cache: dict[int, Optional[np.ndarray]],
) -> float:
    """Net speed toward the nearest road pixel, in frame-widths/second.

    Uses the distance-transform of the road mask at the first and last
    visible frames; positive values mean the pedestrian is closing in on
    the road. Returns 0 when no road exists or the track has one frame.
    """
    if len(track) < 2:
        return 0.0
    (f0, obs0, b0), (f1, obs1, b1) = track[0], track[-1]
    d0 = _road_distance_at(obs0, b0, road_distance_cache)
    d1 = _road_distance_at(obs1, b1, road_distance_cache)
    if d0 is None or d1 is None:
        return 0.0
    dt = (f1 - f0) / fps
    if dt <= 0:
        return 0.0
    return (d0 - d1) / dt / frame_w


def _road_distance_at(
    obs: FrameObservation,
    bbox: BoundingBox,
    cache: dict[int, Optional[np.ndarray]],
) -> Optional[float]:
    if obs.frame_index not in cache:
        road = obs.surfaces.road_mask()
        if not road.any():
            cache[obs.frame_index] = None
        else:
            from scipy.ndimage import distance_transform_edt

            cache[obs.frame_index] = distance_transform_edt(~road)
    dist = cache[obs.frame_index]
    if dist is None:
        return None
    foot_x = min(max(int(bbox.center[0]), 0), obs.surfaces.width - 1)
    foot_y = min(max(int(bbox.y + bbox.h) - 1, 0), obs.surfaces.height - 1)
    return float(dist[foot_y, foot_x])


def compile_scene(
    window: Sequence[FrameObservation],
    manifest: VideoManifest,
    speed_threshold: float = DEFAULT_SPEED_THRESHOLD,
    distance_bands: Sequence[tuple[float, DistanceClass]] = DEFAULT_DISTANCE_BANDS,
) -> SceneDescription:
    """Fuse a causal window of observations into one scene description."""
    if not window:
        raise SceneError("cannot compile an empty window")
    w, h = manifest.width, manifest.height
    for obs in window:
        if (obs.surfaces.width, obs.surfaces.height) != (w, h):
            raise SceneError(
                f"frame {obs.frame_index}: dimensions "
                f"{obs.surfaces.width}x{obs.surfaces.height} != manifest {w}x{h}"
            )

    # Per-id observation track in window order.
    tracks: dict[int, list[tuple[int, FrameObservation, object]]] = {}
    all_ids: set[int] = set()
    for obs in window:
        for e in obs.entities:
            all_ids.add(e.id)
            if e.cls is EntityClass.PEDESTRIAN:
                tracks.setdefault(e.id, []).append((obs.frame_index, obs, e))

    road_dist_cache: dict[int, Optional[np.ndarray]] = {}
    persons: list[PersonFusionRecord] = []
    for pid in sorted(tracks):
        entries = tracks[pid]
        frames = [f for f, _, _ in entries]
        bboxes = [e.bbox for _, _, e in entries]

        surfaces = [assign_surface(e.bbox, obs.surfaces) for _, obs, e in entries]
        medians: list[float] = []
        for f, obs, e in entries:
            m = obs.depth.median_in(e.bbox)
            if m is None:
                raise SceneError(f"id {pid} frame {f}: bbox has no known depth pixels")
            medians.append(m)
        distances = [classify_distance(m, distance_bands) for m in medians]
        positions = [classify_position(b, w, h) for b in bboxes]
        speeds = speed_per_frame(list(zip(frames, bboxes)), manifest.fps, w, speed_threshold)
        angles = [compute_bbox_angle(b, w, manifest.hfov_deg) for b in bboxes]

        segments = _segment_frames(frames, [surfaces, distances, speeds, positions])
        index_of = {f: i for i, f in enumerate(frames)}

        def seg_map(values: Sequence[object]) -> dict[tuple[int, int], object]:
            return {seg: values[index_of[seg[0]]] for seg in segments}

        angle_map = {
            seg: round(
                float(np.mean(angles[index_of[seg[0]]:index_of[seg[1]] + 1])), 1
            )
            for seg in segments
        }
        persons.append(
            PersonFusionRecord(
                id=pid,
                visible_frames=len(frames),
                traj=f"mot_traj_{pid}",
                surface=seg_map(surfaces),
                avg_depth=round(float(np.mean(medians)), 1),
                bbox_angle=angle_map,
                distance_class=seg_map(distances),
                speed_class=seg_map(speeds),
                position_class=seg_map(positions),
                mean_confidence=float(np.mean([e.confidence for _, _, e in entries])),
                approach_speed=_approach_speed(
                    [(f, obs, e.bbox) for f, obs, e in entries],
                    w,
                    manifest.fps,
                    road_dist_cache,
                ),
                low_evidence=len(frames) < 2,
            )
        )

    roadside = _roadside_record(window[-1], all_ids, w, h)
    return SceneDescription(
        video_id=manifest.video_id,
        interval=(window[0].frame_index, window[-1].frame_index),
        roadside=roadside,
        persons=tuple(persons),
        fps=manifest.fps,
    )


def _roadside_record(
    frame: FrameObservation, all_ids: set[int], frame_w: int, frame_h: int
) -> RoadsideInfoRecord:
    """Roadside summary of the window's representative (last) frame."""
    surfaces = frame.surfaces
    regions: list[RegionSummary] = []
    for label in _region_order(surfaces.region_areas):
        mask = surfaces.mask_for(label)
        cell_counts: dict[PositionClass, int] = {}
        ys, xs = np.nonzero(mask)
        cols = np.where(xs < frame_w / 3, 0, np.where(xs < 2 * frame_w / 3, 1, 2))
        rows = (ys >= frame_h / 2).astype(int)
        grid = (
            (PositionClass.UPPER_LEFT, PositionClass.FAR_FRONT, PositionClass.UPPER_RIGHT),
            (PositionClass.LOWER_LEFT, PositionClass.CLOSE_FRONT, PositionClass.LOWER_RIGHT),
        )
        for r in (0, 1):
            for c in (0, 1, 2):
                count = int(np.count_nonzero((rows == r) & (cols == c)))
                if count:
                    cell_counts[grid[r][c]] = count
        enum_rank = {cls: i for i, cls in enumerate(PositionClass)}
        ordered = sorted(cell_counts, key=lambda cls: (-cell_counts[cls], enum_rank[cls]))
        regions.append(
            RegionSummary(
                label=label,
                position=tuple(ordered),
                area_pixels=surfaces.region_areas[label],
            )
        )
    person_area = 0.0
    for e in frame.entities:
        if e.cls is EntityClass.PEDESTRIAN:
            person_area += e.bbox.clip(frame_w, frame_h).area
    return RoadsideInfoRecord(
        regions=tuple(regions),
        total_objects=len(all_ids),
        total_surface_area=sum(surfaces.region_areas.values()),
        total_person_area=round(person_area),
    )


def _region_order(areas: Mapping[str, int]) -> list[str]:
    """Roads before sidewalks, each in region-index order."""
    def key(label: str) -> tuple[int, int]:
        kind, _, idx = label.partition("_")
        return (0 if kind == "road" else 1, int(idx))

    return sorted(areas, key=key)


# --- wire documents ----------------------------------------------------------

def _range_key(rng: tuple[int, int]) -> str:
    return f"{rng[0]}-{rng[1]}"


def _ordered_ranges(m: Mapping[tuple[int, int], object]) -> list[tuple[tuple[int, int], object]]:
    return sorted(m.items(), key=lambda kv: kv[0][0])


def roadside_document(scene: SceneDescription) -> dict:
    doc: dict = {}
    for region in scene.roadside.regions:
        kind, _, idx = region.label.partition("_")
        doc[f"{kind} {idx}"] = {
            "position": [cls.value for cls in region.position],
            "areas pixels": region.area_pixels,
        }
    doc["Total objects"] = scene.roadside.total_objects
    doc["Total surface area"] = scene.roadside.total_surface_area
    doc["Total person area"] = scene.roadside.total_person_area
    return doc


def person_fusion_document(scene: SceneDescription) -> list[dict]:
    records = []
    for p in scene.persons:
        records.append(
            {
                "id": p.id,
                "visible_frames": p.visible_frames,
                "traj": p.traj,
                "surface": {
                    _range_key(r): (v if v is not None else "none")
                    for r, v in _ordered_ranges(p.surface)
                },
                "avg_depth": p.avg_depth,
                "bbox_angle": {_range_key(r): v for r, v in _ordered_ranges(p.bbox_angle)},
                "distance_class": {
                    _range_key(r): DISTANCE_WIRE[v] for r, v in _ordered_ranges(p.distance_class)
                },
                "speed_class": {
                    _range_key(r): SPEED_WIRE[v] for r, v in _ordered_ranges(p.speed_class)
                },
                "position_class": {
                    _range_key(r): v.value for r, v in _ordered_ranges(p.position_class)
                },
            }
        )
    return records


def scene_document(scene: SceneDescription) -> dict:
    return {
        "video_id": scene.video_id,
        "interval": scene.interval_label,
        "roadside": roadside_document(scene),
        "persons": person_fusion_document(scene),
    }


def scene_to_json(scene: SceneDescription) -> str:
    """Canonical serialization: fixed key order, stable float formatting."""
    return json.dumps(scene_document(scene), indent=2, ensure_ascii=False) + "\n"


def write_scene_documents(scene: SceneDescription, out_dir: Path | str) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    roadside_path = out / f"Info_roadside_{scene.video_id}.json"
    fusion_path = out / f"person_fusion_{scene.video_id}.json"
    roadside_path.write_text(
        json.dumps(roadside_document(scene), indent=2, ensure_ascii=False) + "\n"
    )
    fusion_path.write_text(
        json.dumps(person_fusion_document(scene), indent=2, ensure_ascii=False) + "\n"
    )
    return roadside_path, fusion_path


def expand_range_map(m: Mapping[tuple[int, int], object]) -> dict[int, object]:
    """Inverse of the run-length maps: frame -> value, for property checks."""
    out: dict[int, object] = {}
    for (start, end), value in m.items():
        for f in range(start, end + 1):
            if f in out:
                raise SceneError(f"overlapping ranges at frame {f}")
            out[f] = value
    return out
