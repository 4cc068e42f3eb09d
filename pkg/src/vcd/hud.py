"""Overlay state machine: risk signs, guidance arcs, gaze acknowledgment.

Signs are created and retired by risk reports and acknowledged by gaze dwell.
The only state edges are ``active_full -> acknowledged`` (dwell inside the
sign's hit region) and ``acknowledged -> active_full`` (a member's risk rises
again); everything else is creation/retirement driven by reports. Every
``active_full`` sign carries exactly one peripheral guidance arc; acknowledged
signs have none.

The engine is a single-writer machine: one owner feeds it reports and gaze
samples in timestamp order and hands out immutable state snapshots. The
transition event log (newline-delimited JSON) is the golden surface for gaze
interaction tests.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional, Sequence

from .ingest import BoundingBox, EgoState, FrameObservation, VideoManifest
from .risk import RiskLevel, RiskReport
from .scene import assign_surface


class SignKind(Enum):
    ON_ROAD = "on_road"
    ROADSIDE = "roadside"


class SignState(Enum):
    ACTIVE_FULL = "active_full"
    ACKNOWLEDGED = "acknowledged"


@dataclass(frozen=True)
class RiskSign:
    sign_id: int
    member_ids: frozenset[int]
    kind: SignKind
    geometry: BoundingBox
    state: SignState
    created_at: float
    acknowledged_at: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.member_ids:
            raise ValueError("sign must have at least one member id")
        if (self.state is SignState.ACKNOWLEDGED) != (self.acknowledged_at is not None):
            raise ValueError("acknowledged_at must be set exactly for acknowledged signs")


@dataclass(frozen=True)
class GuidanceArc:
    arc_id: str
    target_sign: int
    kind: SignKind
    bearing: float
    visible: bool


@dataclass(frozen=True)
class GazeSample:
    timestamp: float
    x: float
    y: float
    valid: bool = True


@dataclass(frozen=True)
class HudOverlayState:
    frame_index: int
    signs: tuple[RiskSign, ...]
    arcs: tuple[GuidanceArc, ...]
    basics: EgoState

    def sign(self, sign_id: int) -> Optional[RiskSign]:
        for s in self.signs:
            if s.sign_id == sign_id:
                return s
        return None


@dataclass(frozen=True)
class TransitionEvent:
    t: float
    sign: int
    from_state: str
    to_state: str
    cause: str  # "gaze" | "report" | "escalation"

    def to_wire(self) -> dict:
        return {
            "t": self.t,
            "sign": self.sign,
            "from": self.from_state,
            "to": self.to_state,
            "cause": self.cause,
        }


@dataclass(frozen=True)
class HudConfig:
    dwell_ms: float = 200.0        # fixation time that acknowledges a sign
    hit_pad_frac: float = 0.05     # hit-region padding, fraction of frame width
    gap_threshold: float = 0.02    # merge adjacency, fraction of frame width
    sign_pad_frac: float = 0.01    # sign geometry padding around member bboxes
    invalid_gap_ms: float = 100.0  # invalid-sample gap that breaks dwell
    arc_sectors: int = 8


def events_to_ndjson(events: Iterable[TransitionEvent]) -> str:
    return "".join(json.dumps(e.to_wire(), ensure_ascii=False) + "\n" for e in events)


# --- merging ------------------------------------------------------------------

def _box_gaps(a: BoundingBox, b: BoundingBox) -> tuple[float, float]:
    dx = max(0.0, max(a.x, b.x) - min(a.x + a.w, b.x + b.w))
    dy = max(0.0, max(a.y, b.y) - min(a.y + a.h, b.y + b.h))
    return dx, dy


def merge_adjacent(
    signs: Sequence[RiskSign],
    gap_threshold: float,
    frame_w: int,
) -> list[RiskSign]:
    """Transitively merge same-kind signs that overlap or nearly touch.

    Adjacency: horizontal and vertical gaps both below
    ``gap_threshold * frame_w``. Each pass is a union-find over the adjacency
    graph; because a merged union box can creep within the threshold of a
    previously distant sign, passes repeat until no pair violates the gap.
    A merged sign takes the smallest constituent sign_id, the union geometry,
    and stays acknowledged only when every constituent was.
    """
    if not signs:
        return []
    kinds = {s.kind for s in signs}
    if len(kinds) > 1:
        raise ValueError("merge_adjacent expects signs of one kind")
    threshold = gap_threshold * frame_w

    current = list(signs)
    while True:
        merged = _merge_pass(current, threshold)
        if len(merged) == len(current):
            merged.sort(key=lambda s: s.sign_id)
            return merged
        current = merged


def _merge_pass(signs: list[RiskSign], threshold: float) -> list[RiskSign]:
    parent = list(range(len(signs)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(signs)):
        for j in range(i + 1, len(signs)):
            dx, dy = _box_gaps(signs[i].geometry, signs[j].geometry)
            if dx < threshold and dy < threshold:
                parent[find(i)] = find(j)

    groups: dict[int, list[RiskSign]] = {}
    for i, s in enumerate(signs):
        groups.setdefault(find(i), []).append(s)

    merged: list[RiskSign] = []
    for group in groups.values():
        if len(group) == 1:
            merged.append(group[0])
            continue
        geometry = group[0].geometry
        members: set[int] = set()
        for s in group:
            geometry = geometry.union(s.geometry)
            members |= s.member_ids
        all_acked = all(s.state is SignState.ACKNOWLEDGED for s in group)
        merged.append(
            RiskSign(
                sign_id=min(s.sign_id for s in group),
                member_ids=frozenset(members),
                kind=group[0].kind,
                geometry=geometry,
                state=SignState.ACKNOWLEDGED if all_acked else SignState.ACTIVE_FULL,
                created_at=min(s.created_at for s in group),
                acknowledged_at=max(s.acknowledged_at for s in group) if all_acked else None,
            )
        )
    return merged


# --- arcs ---------------------------------------------------------------------

def arc_bearing(geometry: BoundingBox, manifest: VideoManifest, sectors: int = 8) -> float:
    """Compass bearing (0 = up, clockwise) from display center to the sign,
    quantized to coarse sectors for stable rendering."""
    cx, cy = geometry.center
    dx = cx - manifest.width / 2.0
    dy = cy - manifest.height / 2.0
    angle = math.degrees(math.atan2(dx, -dy)) % 360.0
    step = 360.0 / sectors
    return (round(angle / step) % sectors) * step


def _arcs_for(signs: Sequence[RiskSign], manifest: VideoManifest, sectors: int) -> tuple[GuidanceArc, ...]:
    arcs = []
    for s in signs:
        if s.state is SignState.ACTIVE_FULL:
            arcs.append(
                GuidanceArc(
                    arc_id=f"arc_{s.sign_id}",
                    target_sign=s.sign_id,
                    kind=s.kind,
                    bearing=arc_bearing(s.geometry, manifest, sectors),
                    visible=True,
                )
            )
    return tuple(arcs)


# --- report ingestion ---------------------------------------------------------

def _padded(bbox: BoundingBox, pad: float, manifest: VideoManifest) -> BoundingBox:
    return BoundingBox(
        bbox.x - pad, bbox.y - pad, bbox.w + 2 * pad, bbox.h + 2 * pad
    ).clip(manifest.width, manifest.height)


class HudEngine:
    """Owns one display's overlay state; apply reports and gaze in order."""

    def __init__(self, manifest: VideoManifest, config: HudConfig = HudConfig()):
        self.manifest = manifest
        self.config = config
        self.state = HudOverlayState(frame_index=0, signs=(), arcs=(), basics=EgoState())
        self.events: list[TransitionEvent] = []
        self._next_sign_id = 1
        self._member_levels: dict[int, str] = {}
        self._dwell_entry: dict[int, float] = {}
        self._last_valid_t: Optional[float] = None
        self._invalid_since_valid = False
        self._last_gaze_t: Optional[float] = None

    # -- reports --

    def apply_report(self, report: RiskReport, frame: FrameObservation) -> list[TransitionEvent]:
        """Refresh signs from a guarded report and the frame it refers to."""
        t = frame.timestamp
        cfg = self.config
        new_levels = {j.id: j.risk_level for j in report.risks}
        risky = {j.id for j in report.risks if j.risk_level != RiskLevel.NONE}

        pad = cfg.sign_pad_frac * self.manifest.width
        candidates: dict[SignKind, list[RiskSign]] = {k: [] for k in SignKind}
        placeholder_id = -1
        for pid in sorted(risky):
            entity = frame.entity(pid)
            if entity is None:
                continue
            label = assign_surface(entity.bbox, frame.surfaces)
            kind = SignKind.ON_ROAD if (label or "").startswith("road") else SignKind.ROADSIDE
            candidates[kind].append(
                RiskSign(
                    sign_id=placeholder_id,
                    member_ids=frozenset({pid}),
                    kind=kind,
                    geometry=_padded(entity.bbox, pad, self.manifest),
                    state=SignState.ACTIVE_FULL,
                    created_at=t,
                )
            )
            placeholder_id -= 1

        events: list[TransitionEvent] = []
        prior_signs = list(self.state.signs)
        matched_prior: set[int] = set()
        new_signs: list[RiskSign] = []
        for kind in SignKind:
            merged = merge_adjacent(candidates[kind], cfg.gap_threshold, self.manifest.width)
            for cand in sorted(merged, key=lambda s: min(s.member_ids)):
                priors = [p for p in prior_signs if p.member_ids & cand.member_ids]
                if priors:
                    keeper = min(priors, key=lambda p: p.sign_id)
                    matched_prior.update(p.sign_id for p in priors)
                    all_acked = all(p.state is SignState.ACKNOWLEDGED for p in priors)
                    carried_members = set().union(*(p.member_ids for p in priors))
                    escalated = any(
                        _level_rank(new_levels.get(m, RiskLevel.NONE))
                        > _level_rank(self._member_levels.get(m, RiskLevel.NONE))
                        for m in cand.member_ids
                    )
                    fresh_member = bool(cand.member_ids - carried_members)
                    if all_acked and not escalated and not fresh_member:
                        state = SignState.ACKNOWLEDGED
                        acked_at = max(p.acknowledged_at for p in priors)
                    else:
                        state = SignState.ACTIVE_FULL
                        acked_at = None
                        if all_acked:
                            cause = "escalation" if escalated else "report"
                            events.append(
                                TransitionEvent(
                                    t,
                                    keeper.sign_id,
                                    SignState.ACKNOWLEDGED.value,
                                    SignState.ACTIVE_FULL.value,
                                    cause,
                                )
                            )
                    new_signs.append(
                        replace(
                            cand,
                            sign_id=keeper.sign_id,
                            kind=kind,
                            state=state,
                            created_at=min(p.created_at for p in priors),
                            acknowledged_at=acked_at,
                        )
                    )
                else:
                    sign_id = self._next_sign_id
                    self._next_sign_id += 1
                    new_signs.append(replace(cand, sign_id=sign_id))
                    events.append(
                        TransitionEvent(t, sign_id, "none", SignState.ACTIVE_FULL.value, "report")
                    )

        for prior in prior_signs:
            if prior.sign_id not in matched_prior:
                events.append(
                    TransitionEvent(t, prior.sign_id, prior.state.value, "none", "report")
                )
                self._dwell_entry.pop(prior.sign_id, None)

        new_signs.sort(key=lambda s: s.sign_id)
        self.state = HudOverlayState(
            frame_index=frame.frame_index,
            signs=tuple(new_signs),
            arcs=_arcs_for(new_signs, self.manifest, cfg.arc_sectors),
            basics=frame.ego,
        )
        self._member_levels = new_levels
        self.events.extend(events)
        return events

    # -- gaze --

    def apply_gaze(self, samples: Sequence[GazeSample]) -> list[TransitionEvent]:
        """Advance dwell accumulators; acknowledge signs fixated long enough.

        Invalid samples are skipped; they only break dwell continuity when
        the span without valid samples reaches ``invalid_gap_ms``.
        """
        cfg = self.config
        events: list[TransitionEvent] = []
        for sample in samples:
            if self._last_gaze_t is not None and sample.timestamp < self._last_gaze_t:
                raise ValueError(
                    f"gaze timestamps must be non-decreasing "
                    f"({sample.timestamp} < {self._last_gaze_t})"
                )
            self._last_gaze_t = sample.timestamp
            if not sample.valid:
                self._invalid_since_valid = True
                continue
            if (
                self._invalid_since_valid
                and self._last_valid_t is not None
                and (sample.timestamp - self._last_valid_t) * 1000.0 >= cfg.invalid_gap_ms
            ):
                self._dwell_entry.clear()
            self._invalid_since_valid = False
            self._last_valid_t = sample.timestamp

            px = sample.x * self.manifest.width
            py = sample.y * self.manifest.height
            pad = cfg.hit_pad_frac * self.manifest.width
            updated: Optional[list[RiskSign]] = None
            for idx, sign in enumerate(self.state.signs):
                if sign.state is not SignState.ACTIVE_FULL:
                    continue
                hit = BoundingBox(
                    sign.geometry.x - pad,
                    sign.geometry.y - pad,
                    sign.geometry.w + 2 * pad,
                    sign.geometry.h + 2 * pad,
                )
                if hit.contains_point(px, py):
                    entry = self._dwell_entry.setdefault(sign.sign_id, sample.timestamp)
                    if (sample.timestamp - entry) * 1000.0 >= cfg.dwell_ms:
                        if updated is None:
                            updated = list(self.state.signs)
                        updated[idx] = replace(
                            sign,
                            state=SignState.ACKNOWLEDGED,
                            acknowledged_at=sample.timestamp,
                        )
                        self._dwell_entry.pop(sign.sign_id, None)
                        events.append(
                            TransitionEvent(
                                sample.timestamp,
                                sign.sign_id,
                                SignState.ACTIVE_FULL.value,
                                SignState.ACKNOWLEDGED.value,
                                "gaze",
                            )
                        )
                else:
                    self._dwell_entry.pop(sign.sign_id, None)
            if updated is not None:
                signs = tuple(updated)
                self.state = replace(
                    self.state,
                    signs=signs,
                    arcs=_arcs_for(signs, self.manifest, cfg.arc_sectors),
                )
        self.events.extend(events)
        return events


def _level_rank(level: str) -> int:
    return RiskLevel.ORDER.index(level)


# --- rendering ------------------------------------------------------------------

TRIANGLE_W = 64.0
TRIANGLE_H = 56.0
MINI_TRIANGLE_SCALE = 0.5
BASICS_BAR_H = 72.0


def render_model(state: HudOverlayState, manifest: VideoManifest) -> list[dict]:
    """Declarative display list for the viewer; no pixels are drawn here.

    on_road signs render as hollow red triangles above the geometry (half
    scale once acknowledged); roadside signs render as corner-only yellow
    rectangles that collapse to a small solid triangle when acknowledged.
    Arcs sit on the display periphery at their sign's bearing, and the basics
    bar (speed / time / navigation) anchors the bottom edge.
    """
    primitives: list[dict] = []
    for sign in sorted(state.signs, key=lambda s: s.sign_id):
        cx, _ = sign.geometry.center
        if sign.kind is SignKind.ON_ROAD:
            scale = 1.0 if sign.state is SignState.ACTIVE_FULL else 0.5
            w, h = TRIANGLE_W * scale, TRIANGLE_H * scale
            primitives.append(
                {
                    "shape": "triangle_hollow",
                    "color": "red",
                    "x": round(cx - w / 2, 1),
                    "y": round(max(0.0, sign.geometry.y - h - 8.0), 1),
                    "w": round(w, 1),
                    "h": round(h, 1),
                    "scale": scale,
                    "sign": sign.sign_id,
                }
            )
        elif sign.state is SignState.ACTIVE_FULL:
            primitives.append(
                {
                    "shape": "corner_rect",
                    "color": "yellow",
                    "x": round(sign.geometry.x, 1),
                    "y": round(sign.geometry.y, 1),
                    "w": round(sign.geometry.w, 1),
                    "h": round(sign.geometry.h, 1),
                    "scale": 1.0,
                    "sign": sign.sign_id,
                }
            )
        else:
            w = TRIANGLE_W * MINI_TRIANGLE_SCALE
            h = TRIANGLE_H * MINI_TRIANGLE_SCALE
            primitives.append(
                {
                    "shape": "triangle_solid",
                    "color": "yellow",
                    "x": round(cx - w / 2, 1),
                    "y": round(max(0.0, sign.geometry.y - h - 8.0), 1),
                    "w": round(w, 1),
                    "h": round(h, 1),
                    "scale": MINI_TRIANGLE_SCALE,
                    "sign": sign.sign_id,
                }
            )
    for arc in sorted(state.arcs, key=lambda a: a.target_sign):
        if arc.visible:
            primitives.append(
                {
                    "shape": "arc",
                    "color": "red" if arc.kind is SignKind.ON_ROAD else "yellow",
                    "bearing": arc.bearing,
                    "sign": arc.target_sign,
                }
            )
    primitives.append(
        {
            "shape": "basics",
            "x": 0.0,
            "y": round(manifest.height - BASICS_BAR_H, 1),
            "w": float(manifest.width),
            "h": BASICS_BAR_H,
            "speed_kmh": state.basics.speed_kmh,
            "clock": state.basics.clock,
            "nav": state.basics.nav.value,
        }
    )
    return primitives
