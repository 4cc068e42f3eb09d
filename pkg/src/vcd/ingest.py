"""Loading, validation and time-alignment of precomputed perception fixtures.

The neural stages (detector/tracker, segmenter, depth estimator) run offline;
this module adapts their dumped outputs into immutable ``FrameObservation``
sequences. Fixture formats are deliberately line-oriented and diffable:

- ``tracks.csv``      one detection per row: ``frame,id,x,y,w,h,confidence,class``
- ``legend.json``     pixel value -> surface label, e.g. ``{"1": "road_0"}``
- ``masks/frame_<NNNNNN>.png``   8-bit single-channel PNG label image
- ``depth/frame_<NNNNNN>.depth`` ASCII header ``width height\\n`` followed by
  row-major little-endian float32 values, NaN = unknown depth
- ``ego.csv``         optional: ``frame,speed_kmh,clock,nav``
- ``manifest.json``   ``{"video_id", "fps", "width", "height", "hfov_deg"}``
  plus optional ``n_frames``

Loading is pure and reentrant; loaded values are never mutated afterwards.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from PIL import Image


class FixtureError(ValueError):
    """A fixture file is missing, malformed, or violates an invariant."""


class AlignmentError(FixtureError):
    """Streams cannot be combined into a consistent observation sequence."""


class EntityClass(Enum):
    PEDESTRIAN = "pedestrian"
    VEHICLE = "vehicle"


class NavDirection(Enum):
    STRAIGHT = "straight"
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box, top-left origin, pixel units.

    ``clamped`` records that the box was cut back to frame bounds; the raw
    tracker output routinely overshoots the frame edge.
    """

    x: float
    y: float
    w: float
    h: float
    clamped: bool = False

    def __post_init__(self) -> None:
        if not (self.w > 0 and self.h > 0):
            raise FixtureError(f"bbox must have positive size, got w={self.w} h={self.h}")

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def area(self) -> float:
        return self.w * self.h

    def clip(self, frame_w: int, frame_h: int) -> "BoundingBox":
        """Clamp to frame bounds, flagging the box if anything changed."""
        x0 = min(max(self.x, 0.0), frame_w - 1.0)
        y0 = min(max(self.y, 0.0), frame_h - 1.0)
        x1 = min(max(self.x + self.w, 1.0), float(frame_w))
        y1 = min(max(self.y + self.h, 1.0), float(frame_h))
        if (x0, y0, x1 - x0, y1 - y0) == (self.x, self.y, self.w, self.h):
            return self
        return BoundingBox(x0, y0, x1 - x0, y1 - y0, clamped=True)

    def pixel_box(self, frame_w: int, frame_h: int) -> tuple[int, int, int, int]:
        """Integer (x0, y0, x1, y1) half-open pixel bounds, clamped to frame."""
        x0 = max(0, int(math.floor(self.x)))
        y0 = max(0, int(math.floor(self.y)))
        x1 = min(frame_w, int(math.ceil(self.x + self.w)))
        y1 = min(frame_h, int(math.ceil(self.y + self.h)))
        return x0, y0, max(x1, x0 + 1), max(y1, y0 + 1)

    def union(self, other: "BoundingBox") -> "BoundingBox":
        x0 = min(self.x, other.x)
        y0 = min(self.y, other.y)
        x1 = max(self.x + self.w, other.x + other.w)
        y1 = max(self.y + self.h, other.y + other.h)
        return BoundingBox(x0, y0, x1 - x0, y1 - y0)

    def contains_point(self, px: float, py: float) -> bool:
        return self.x <= px < self.x + self.w and self.y <= py < self.y + self.h


@dataclass(frozen=True)
class TrackedEntity:
    id: int
    cls: EntityClass
    bbox: BoundingBox
    confidence: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.confidence <= 1.0):
            raise FixtureError(f"confidence out of range: {self.confidence}")


@dataclass(frozen=True)
class EgoState:
    speed_kmh: float = 0.0
    clock: str = "12:00:00"
    nav: NavDirection = NavDirection.STRAIGHT

    def __post_init__(self) -> None:
        if self.speed_kmh < 0:
            raise FixtureError(f"ego speed must be >= 0, got {self.speed_kmh}")


@dataclass(frozen=True)
class SurfaceMap:
    """Per-pixel surface labels with exact region pixel counts.

    ``codes`` holds small integer codes; ``legend`` maps code -> label where a
    label is ``road_<k>``, ``sidewalk_<k>`` or ``none``. Arrays are treated as
    immutable after construction.
    """

    width: int
    height: int
    codes: np.ndarray
    legend: Mapping[int, str]
    region_areas: Mapping[str, int] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.codes.shape != (self.height, self.width):
            raise FixtureError(
                f"surface map shape {self.codes.shape} != ({self.height}, {self.width})"
            )
        present = np.unique(self.codes)
        missing = [int(v) for v in present if int(v) not in self.legend]
        if missing:
            raise FixtureError(f"pixel values missing from legend: {missing}")
        if self.region_areas is None:
            areas = {}
            for code, label in sorted(self.legend.items()):
                if label == "none":
                    continue
                count = int(np.count_nonzero(self.codes == code))
                if count:
                    areas[label] = count
            object.__setattr__(self, "region_areas", areas)
        self.codes.setflags(write=False)

    def label_at(self, x: int, y: int) -> str:
        return self.legend[int(self.codes[y, x])]

    def mask_for(self, label: str) -> np.ndarray:
        codes = [c for c, lab in self.legend.items() if lab == label]
        if not codes:
            raise FixtureError(f"unknown region label: {label}")
        mask = np.zeros((self.height, self.width), dtype=bool)
        for c in codes:
            mask |= self.codes == c
        return mask

    def road_mask(self) -> np.ndarray:
        mask = np.zeros((self.height, self.width), dtype=bool)
        for c, lab in self.legend.items():
            if lab.startswith("road"):
                mask |= self.codes == c
        return mask

    def centroid(self, label: str) -> tuple[float, float]:
        ys, xs = np.nonzero(self.mask_for(label))
        if len(xs) == 0:
            raise FixtureError(f"region {label} has no pixels")
        return float(xs.mean()), float(ys.mean())


@dataclass(frozen=True)
class DepthField:
    """Metric depth per pixel in meters; NaN marks unknown.

    0.0 is a legal "touching the bumper" depth, so unknown must stay a
    distinct marker and never collapse to zero.
    """

    width: int
    height: int
    depth: np.ndarray

    def __post_init__(self) -> None:
        if self.depth.shape != (self.height, self.width):
            raise FixtureError(
                f"depth shape {self.depth.shape} != ({self.height}, {self.width})"
            )
        known = self.depth[~np.isnan(self.depth)]
        if known.size and (not np.all(np.isfinite(known)) or known.min() < 0):
            raise FixtureError("known depths must be finite and >= 0")
        self.depth.setflags(write=False)

    def median_in(self, bbox: BoundingBox) -> Optional[float]:
        """Median of known depths inside the bbox; None when all unknown."""
        x0, y0, x1, y1 = bbox.pixel_box(self.width, self.height)
        patch = self.depth[y0:y1, x0:x1]
        known = patch[~np.isnan(patch)]
        if known.size == 0:
            return None
        return float(np.median(known))


@dataclass(frozen=True)
class FrameObservation:
    frame_index: int
    timestamp: float
    entities: tuple[TrackedEntity, ...]
    surfaces: SurfaceMap
    depth: DepthField
    ego: EgoState

    def __post_init__(self) -> None:
        if self.frame_index < 0:
            raise FixtureError("frame_index must be >= 0")
        if (self.surfaces.width, self.surfaces.height) != (self.depth.width, self.depth.height):
            raise AlignmentError(
                f"frame {self.frame_index}: surface {self.surfaces.width}x{self.surfaces.height}"
                f" != depth {self.depth.width}x{self.depth.height}"
            )

    def pedestrians(self) -> tuple[TrackedEntity, ...]:
        return tuple(e for e in self.entities if e.cls is EntityClass.PEDESTRIAN)

    def entity(self, entity_id: int) -> Optional[TrackedEntity]:
        for e in self.entities:
            if e.id == entity_id:
                return e
        return None


@dataclass(frozen=True)
class VideoManifest:
    video_id: str
    fps: float = 30.0
    width: int = 1920
    height: int = 1080
    hfov_deg: float = 90.0
    n_frames: Optional[int] = None

    def __post_init__(self) -> None:
        if self.fps <= 0:
            raise FixtureError("fps must be > 0")
        if self.width <= 0 or self.height <= 0:
            raise FixtureError("frame dimensions must be positive")
        if not (0 < self.hfov_deg < 180):
            raise FixtureError("hfov_deg must lie in (0, 180)")


def load_manifest(path: Path | str) -> VideoManifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FixtureError(f"{path}: invalid JSON: {exc}") from exc
    try:
        return VideoManifest(
            video_id=raw["video_id"],
            fps=float(raw.get("fps", 30.0)),
            width=int(raw.get("width", 1920)),
            height=int(raw.get("height", 1080)),
            hfov_deg=float(raw.get("hfov_deg", 90.0)),
            n_frames=int(raw["n_frames"]) if "n_frames" in raw else None,
        )
    except KeyError as exc:
        raise FixtureError(f"{path}: missing manifest key {exc}") from exc


def write_manifest(manifest: VideoManifest, path: Path | str) -> None:
    doc = {
        "video_id": manifest.video_id,
        "fps": manifest.fps,
        "width": manifest.width,
        "height": manifest.height,
        "hfov_deg": manifest.hfov_deg,
    }
    if manifest.n_frames is not None:
        doc["n_frames"] = manifest.n_frames
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


# --- track fixtures ---------------------------------------------------------

def load_track_file(path: Path | str) -> list[tuple[int, list[TrackedEntity]]]:
    """Parse a MOT-style CSV into per-frame entity groups.

    Rows are grouped by frame and sorted by (frame, id). Ids are preserved
    verbatim. Raises FixtureError with the offending line number on parse
    problems, duplicate (frame, id) pairs, out-of-range confidences, or an id
    that changes class mid-track.
    """
    path = Path(path)
    if not path.exists():
        raise FixtureError(f"track file not found: {path}")
    frames: dict[int, list[TrackedEntity]] = {}
    seen: set[tuple[int, int]] = set()
    id_class: dict[int, EntityClass] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 8:
            raise FixtureError(f"{path}:{lineno}: expected 8 fields, got {len(parts)}")
        try:
            frame = int(parts[0])
            entity_id = int(parts[1])
            x, y, w, h = (float(v) for v in parts[2:6])
            conf = float(parts[6])
        except ValueError as exc:
            raise FixtureError(f"{path}:{lineno}: {exc}") from exc
        try:
            cls = EntityClass(parts[7])
        except ValueError:
            raise FixtureError(f"{path}:{lineno}: unknown class {parts[7]!r}") from None
        if frame < 0:
            raise FixtureError(f"{path}:{lineno}: negative frame index")
        if not (0.0 <= conf <= 1.0):
            raise FixtureError(f"{path}:{lineno}: confidence out of range: {conf}")
        if (frame, entity_id) in seen:
            raise FixtureError(f"{path}:{lineno}: duplicate (frame, id) pair ({frame}, {entity_id})")
        if id_class.setdefault(entity_id, cls) is not cls:
            raise FixtureError(
                f"{path}:{lineno}: id {entity_id} changes class to {cls.value}"
            )
        seen.add((frame, entity_id))
        try:
            bbox = BoundingBox(x, y, w, h)
            entity = TrackedEntity(entity_id, cls, bbox, conf)
        except FixtureError as exc:
            raise FixtureError(f"{path}:{lineno}: {exc}") from exc
        frames.setdefault(frame, []).append(entity)
    return [
        (frame, sorted(frames[frame], key=lambda e: e.id))
        for frame in sorted(frames)
    ]


def write_track_file(frames: Iterable[tuple[int, Sequence[TrackedEntity]]], path: Path | str) -> None:
    rows = []
    for frame, entities in frames:
        for e in sorted(entities, key=lambda e: e.id):
            b = e.bbox
            rows.append(
                f"{frame},{e.id},{_fmt(b.x)},{_fmt(b.y)},{_fmt(b.w)},{_fmt(b.h)},"
                f"{_fmt(e.confidence)},{e.cls.value}"
            )
    Path(path).write_text("\n".join(rows) + ("\n" if rows else ""))


def _fmt(v: float) -> str:
    """Render floats compactly but round-trip exactly (repr of Python float)."""
    return repr(float(v))


# --- surface fixtures -------------------------------------------------------

def load_legend(path: Path | str) -> dict[int, str]:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FixtureError(f"{path}: invalid JSON: {exc}") from exc
    legend: dict[int, str] = {}
    for key, label in raw.items():
        code = int(key)
        if label != "none" and not (label.startswith("road_") or label.startswith("sidewalk_")):
            raise FixtureError(f"{path}: bad surface label {label!r}")
        legend[code] = label
    return legend


def load_surface_map(path: Path | str, legend: Mapping[int, str]) -> SurfaceMap:
    path = Path(path)
    if not path.exists():
        raise FixtureError(f"surface mask not found: {path}")
    try:
        with Image.open(path) as img:
            if img.mode != "L":
                img = img.convert("L")
            codes = np.asarray(img, dtype=np.uint8).copy()
    except FixtureError:
        raise
    except Exception as exc:
        raise FixtureError(f"{path}: cannot read mask image: {exc}") from exc
    h, w = codes.shape
    try:
        return SurfaceMap(width=w, height=h, codes=codes, legend=dict(legend))
    except FixtureError as exc:
        raise FixtureError(f"{path}: {exc}") from exc


def write_surface_map(surfaces: SurfaceMap, path: Path | str) -> None:
    Image.fromarray(np.asarray(surfaces.codes, dtype=np.uint8), mode="L").save(Path(path))


# --- depth fixtures ---------------------------------------------------------

def load_depth_field(path: Path | str) -> DepthField:
    path = Path(path)
    if not path.exists():
        raise FixtureError(f"depth file not found: {path}")
    blob = path.read_bytes()
    nl = blob.find(b"\n")
    if nl < 0:
        raise FixtureError(f"{path}: missing depth header")
    try:
        w_str, h_str = blob[:nl].decode("ascii").split()
        w, h = int(w_str), int(h_str)
    except Exception as exc:
        raise FixtureError(f"{path}: bad depth header: {exc}") from exc
    payload = blob[nl + 1:]
    expected = w * h * 4
    if len(payload) != expected:
        raise FixtureError(
            f"{path}: depth payload is {len(payload)} bytes, expected {expected}"
        )
    depth = np.frombuffer(payload, dtype="<f4").reshape(h, w).astype(np.float32)
    return DepthField(width=w, height=h, depth=depth)


def write_depth_field(depth: DepthField, path: Path | str) -> None:
    header = f"{depth.width} {depth.height}\n".encode("ascii")
    Path(path).write_bytes(header + np.asarray(depth.depth, dtype="<f4").tobytes())


# --- ego fixtures -----------------------------------------------------------

def load_ego_file(path: Path | str) -> dict[int, EgoState]:
    path = Path(path)
    states: dict[int, EgoState] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 4:
            raise FixtureError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
        try:
            frame = int(parts[0])
            state = EgoState(float(parts[1]), parts[2], NavDirection(parts[3]))
        except (ValueError, FixtureError) as exc:
            raise FixtureError(f"{path}:{lineno}: {exc}") from exc
        if frame in states:
            raise FixtureError(f"{path}:{lineno}: duplicate ego frame {frame}")
        states[frame] = state
    return states


def write_ego_file(states: Mapping[int, EgoState], path: Path | str) -> None:
    rows = [
        f"{frame},{_fmt(s.speed_kmh)},{s.clock},{s.nav.value}"
        for frame, s in sorted(states.items())
    ]
    Path(path).write_text("\n".join(rows) + ("\n" if rows else ""))


# --- alignment --------------------------------------------------------------

def align_streams(
    tracks: Sequence[tuple[int, Sequence[TrackedEntity]]],
    surfaces: Mapping[int, SurfaceMap],
    depths: Mapping[int, DepthField],
    ego: Optional[Mapping[int, EgoState]],
    manifest: VideoManifest,
    frame_indices: Optional[Sequence[int]] = None,
) -> list[FrameObservation]:
    """Join per-frame streams into FrameObservation values.

    By default one observation is produced per frame index present in
    ``tracks``; pass ``frame_indices`` to align an explicit frame set (frames
    without detections then carry empty entity tuples). A frame lacking its
    surface map or depth field is an error, never a silent default.
    """
    track_by_frame = {frame: list(entities) for frame, entities in tracks}
    if frame_indices is None:
        indices = sorted(track_by_frame)
    else:
        indices = list(frame_indices)
        if sorted(indices) != indices:
            raise AlignmentError("frame_indices must be sorted ascending")
    missing_surface = [f for f in indices if f not in surfaces]
    if missing_surface:
        raise AlignmentError(f"missing surface map for frames {missing_surface}")
    missing_depth = [f for f in indices if f not in depths]
    if missing_depth:
        raise AlignmentError(f"missing depth field for frames {missing_depth}")

    observations: list[FrameObservation] = []
    prev_ts: Optional[float] = None
    for f in indices:
        entities = tuple(
            replace(e, bbox=e.bbox.clip(manifest.width, manifest.height))
            for e in track_by_frame.get(f, [])
        )
        ts = f / manifest.fps
        if prev_ts is not None and ts <= prev_ts:
            raise AlignmentError(f"timestamp regression at frame {f}")
        prev_ts = ts
        ego_state = (ego or {}).get(f, _default_ego(f, manifest.fps))
        observations.append(
            FrameObservation(
                frame_index=f,
                timestamp=ts,
                entities=entities,
                surfaces=surfaces[f],
                depth=depths[f],
                ego=ego_state,
            )
        )
    return observations


def _default_ego(frame: int, fps: float) -> EgoState:
    total = int(frame / fps) + 12 * 3600
    hh, rem = divmod(total, 3600)
    mm, ss = divmod(rem, 60)
    return EgoState(0.0, f"{hh:02d}:{mm:02d}:{ss:02d}", NavDirection.STRAIGHT)


# --- on-disk layout ---------------------------------------------------------

MASK_DIR = "masks"
DEPTH_DIR = "depth"
TRACKS_NAME = "tracks.csv"
LEGEND_NAME = "legend.json"
EGO_NAME = "ego.csv"
MANIFEST_NAME = "manifest.json"


def frame_mask_name(frame: int) -> str:
    return f"frame_{frame:06d}.png"


def frame_depth_name(frame: int) -> str:
    return f"frame_{frame:06d}.depth"


class VideoFixtures:
    """Lazy per-frame access to one video's fixture directory.

    Track data is read eagerly (it is tiny); masks and depth fields are read
    on demand so one corrupt frame only fails the window that touches it.
    """

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.manifest = load_manifest(self.root / MANIFEST_NAME)
        self.legend = load_legend(self.root / LEGEND_NAME)
        self.tracks = load_track_file(self.root / TRACKS_NAME)
        self._track_by_frame = {f: ents for f, ents in self.tracks}
        ego_path = self.root / EGO_NAME
        self.ego = load_ego_file(ego_path) if ego_path.exists() else None

    @property
    def n_frames(self) -> int:
        if self.manifest.n_frames is not None:
            return self.manifest.n_frames
        if not self.tracks:
            return 0
        return self.tracks[-1][0] + 1

    def entities_at(self, frame: int) -> list[TrackedEntity]:
        return list(self._track_by_frame.get(frame, []))

    def ego_at(self, frame: int) -> EgoState:
        if self.ego and frame in self.ego:
            return self.ego[frame]
        return _default_ego(frame, self.manifest.fps)

    def load_window(self, frame_indices: Sequence[int]) -> list[FrameObservation]:
        surfaces = {
            f: load_surface_map(self.root / MASK_DIR / frame_mask_name(f), self.legend)
            for f in frame_indices
        }
        depths = {
            f: load_depth_field(self.root / DEPTH_DIR / frame_depth_name(f))
            for f in frame_indices
        }
        tracks = [(f, self._track_by_frame.get(f, [])) for f in frame_indices]
        return align_streams(tracks, surfaces, depths, self.ego, self.manifest, frame_indices)
