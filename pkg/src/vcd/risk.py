"""Prompt assembly, completion service, verdict parsing, and safety guards.

The analyst is a text-completion model behind a pluggable service interface.
A scene description is rendered into a deterministic prompt, the response is
parsed back into per-pedestrian judgments, and deployment guards bound the
verdicts with sensor-side evidence before anything reaches the display:

- downgrade: distant sidewalk pedestrians with no motion toward the road
- flip suppression: verdict flips unsupported by any state change
- confidence suppression: ids the detector itself barely believes in

Guards annotate, lower, or exclude — they never raise and never escalate.
"""

from __future__ import annotations

import json
import logging
import os
import time
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Optional, Sequence

import requests

from .scene import (
    DistanceClass,
    PersonFusionRecord,
    SceneDescription,
    SceneError,
    scene_document,
)

log = logging.getLogger(__name__)

DEFAULT_MODEL = "gpt-3.5-turbo-16k-0613"
DEFAULT_LOOK_BACK_S = 3.0


class RiskLevel:
    NONE = "none"
    LOW = "low"
    HIGH = "high"

    ORDER = (NONE, LOW, HIGH)

    @classmethod
    def one_step_down(cls, level: str) -> str:
        idx = cls.ORDER.index(level)
        return cls.ORDER[max(0, idx - 1)]


class PromptError(ValueError):
    """A template part is missing or the scene cannot be rendered."""


class VerdictParseError(ValueError):
    """Response text did not contain a parseable evaluation.

    The verbatim response is preserved on ``raw_response``.
    """

    def __init__(self, message: str, raw_response: str):
        super().__init__(message)
        self.raw_response = raw_response


class CompletionError(RuntimeError):
    pass


class CompletionTransportError(CompletionError):
    def __init__(self, endpoint: str, cause: Exception):
        super().__init__(f"completion service unreachable at {endpoint}: {cause}")
        self.endpoint = endpoint


class CompletionTimeout(CompletionError):
    def __init__(self, endpoint: str, elapsed_s: float):
        super().__init__(f"completion timed out after {elapsed_s:.3f}s at {endpoint}")
        self.elapsed_s = elapsed_s


class EmptyResponseError(CompletionError):
    pass


# --- prompt templates --------------------------------------------------------

DEFAULT_TASK_PROMPT = """\
You are Visionary Co-Driver, an expert road-scene analyst. Your goal is to \
help human drivers perceive pedestrian risks through natural-language reasoning.

Given a video showing multiple pedestrians and their object detection results, \
proceed step-by-step to:

1. Identify potential risky pedestrians.
2. Provide a binary evaluation [safe or risky] for each pedestrian ID.

Provide your answer in Markdown format consistent with the examples provided.
"""

DEFAULT_INPUT_EXPLANATION = """\
We have processed a driving scenario video into natural language for your \
reasoning. The following keys are provided for every tracked pedestrian:

- ID: Globally unique identifier within the video.
- Surface: road, sidewalk, none (per frame range).
- Distance Class: Categories are very close, near, medium, far. (per frame range)
- Speed Class: Categories are high, low. (per frame range)
- Position Class: Categories are upper-left, upper-right, far-front, \
close-front, lower-left, lower-right.

Concisely describe the scene in the following format:

1. Potential Risks: Describe clearly WHY any pedestrian ID poses a risk.
2. Safety Evaluation: List each pedestrian's safety status as `Person <ID>: Safe | Risky`.
"""

FEW_SHOT_SCENE = """\
Info_roadside_video_16.json
{
  "road 0": { "position": ["close-front", "far-front"],
              "areas pixels": 252945 },
  "sidewalk 0": { "position": ["lower-right", "close-front"],
                  "areas pixels": 58185 },
  "sidewalk 1": { "position": ["lower-right", "upper-right"],
                  "areas pixels": 55574 },
  "Total objects": 12,
  "Total surface area": 366704,
  "Total person area": 27046
}

person_fusion_video_16.json
[
  {
    "id": 8,
    "visible_frames": 50,
    "traj": "mot_traj_15",
    "surface": {"0-20": "sidewalk_0", "21-50": "road_0"},
    "distance_class": {"0-20": "near", "21-50": "very close"},
    "speed_class": {"0-20": "high", "21-50": "high"},
    "position_class": {"0-20": "upper-left", "21-50": "close-front"}
  },
  {
    "id": 12,
    "visible_frames": 60,
    "surface": {"0-60": "sidewalk_0"},
    "distance_class": {"0-60": "far"},
    "speed_class": {"0-60": "low"},
    "position_class": {"0-60": "upper-left"}
  }
]
"""

FEW_SHOT_ANSWER = """\
### Scene
Urban two-lane road; one pedestrian crosses from left sidewalk, another stays \
stationary on sidewalk.

#### Potential Risks
Person 8 rapidly moves from sidewalk to road (within 5m), indicating intention to cross.
Person 12 stationary on sidewalk; no immediate risk.

#### Safety Evaluation
Person 8 : Risky
Person 12 : Safe
"""


@dataclass(frozen=True)
class PromptBundle:
    overall_task: str = DEFAULT_TASK_PROMPT
    input_explanation: str = DEFAULT_INPUT_EXPLANATION
    few_shot: tuple[tuple[str, str], ...] = ((FEW_SHOT_SCENE, FEW_SHOT_ANSWER),)

    def validate(self) -> None:
        if not self.overall_task.strip():
            raise PromptError("overall_task template part is empty")
        if not self.input_explanation.strip():
            raise PromptError("input_explanation template part is empty")
        if not self.few_shot or any(
            not s.strip() or not a.strip() for s, a in self.few_shot
        ):
            raise PromptError("few_shot template part is empty")


DEFAULT_BUNDLE = PromptBundle()


@dataclass(frozen=True)
class Prompt:
    system: str
    user: str
    token_estimate: int

    @property
    def text(self) -> str:
        return self.system + "\n\n" + self.user


def truncate_scene(scene: SceneDescription, look_back_s: float = DEFAULT_LOOK_BACK_S) -> SceneDescription:
    """Cap a scene to the most recent ``look_back_s`` seconds of frames.

    The analyst judges the current second from at most the previous three
    seconds; longer windows are cut back from the front. Frame-range maps are
    clipped at the cutoff, persons left with no visible frames are dropped,
    and visible_frames is recounted from the surviving ranges. avg_depth and
    approach evidence are left as compiled.
    """
    if scene.span_seconds <= look_back_s + 1e-9:
        return scene
    n_keep = int(round(look_back_s * scene.fps))
    cutoff = scene.interval[1] - n_keep + 1
    warnings.warn(
        f"scene {scene.video_id} {scene.interval_label} spans "
        f"{scene.span_seconds:.2f}s > {look_back_s:.0f}s look-back; truncating at frame {cutoff}",
        stacklevel=2,
    )

    def crop(m: Mapping[tuple[int, int], object]) -> dict[tuple[int, int], object]:
        out = {}
        for (s, e), v in m.items():
            if e < cutoff:
                continue
            out[(max(s, cutoff), e)] = v
        return out

    persons = []
    for p in scene.persons:
        surface = crop(p.surface)
        if not surface:
            continue
        persons.append(
            replace(
                p,
                surface=surface,
                bbox_angle=crop(p.bbox_angle),
                distance_class=crop(p.distance_class),
                speed_class=crop(p.speed_class),
                position_class=crop(p.position_class),
                visible_frames=sum(e - s + 1 for s, e in surface),
            )
        )
    return replace(
        scene,
        interval=(max(scene.interval[0], cutoff), scene.interval[1]),
        persons=tuple(persons),
    )


def build_prompt(
    scene: SceneDescription,
    bundle: PromptBundle = DEFAULT_BUNDLE,
    look_back_s: float = DEFAULT_LOOK_BACK_S,
) -> Prompt:
    """Render the deterministic prompt: task, explanation, examples, scene."""
    bundle.validate()
    scene = truncate_scene(scene, look_back_s)
    doc = scene_document(scene)
    scene_text = (
        f"Info_roadside_{scene.video_id}.json\n"
        + json.dumps(doc["roadside"], indent=2, ensure_ascii=False)
        + f"\n\nperson_fusion_{scene.video_id}.json\n"
        + json.dumps(doc["persons"], indent=2, ensure_ascii=False)
    )
    parts = [bundle.input_explanation.rstrip()]
    for shot_scene, shot_answer in bundle.few_shot:
        parts.append("Example Scene Description:\n" + shot_scene.rstrip())
        parts.append("Example Output:\n" + shot_answer.rstrip())
    parts.append("Road Scene Text:\n" + scene_text.rstrip())
    user = "\n\n".join(parts) + "\n"
    system = bundle.overall_task
    full = system + "\n\n" + user
    return Prompt(system=system, user=user, token_estimate=max(1, len(full) // 4))


# --- completion services -----------------------------------------------------

@dataclass(frozen=True)
class ServiceConfig:
    endpoint: str = "http://127.0.0.1:8080/v1/chat/completions"
    model: str = DEFAULT_MODEL
    api_key: str = ""
    timeout_s: float = 30.0
    temperature: float = 0.0


def load_service_config(path: Optional[Path | str] = None, env: Optional[Mapping[str, str]] = None) -> ServiceConfig:
    """Config file values overridden by VCD_* environment variables."""
    env = os.environ if env is None else env
    base: dict = {}
    if path is not None:
        base = json.loads(Path(path).read_text())
    return ServiceConfig(
        endpoint=env.get("VCD_ENDPOINT", base.get("endpoint", ServiceConfig.endpoint)),
        model=env.get("VCD_MODEL", base.get("model", DEFAULT_MODEL)),
        api_key=env.get("VCD_API_KEY", base.get("api_key", "")),
        timeout_s=float(env.get("VCD_TIMEOUT_S", base.get("timeout_s", 30.0))),
        temperature=float(env.get("VCD_TEMPERATURE", base.get("temperature", 0.0))),
    )


@dataclass(frozen=True)
class CompletionResult:
    text: str
    latency_s: float
    model: str


class HttpCompletionService:
    """Chat-completion wire format over HTTP; retries once on transport failure."""

    def __init__(self, config: ServiceConfig, session: Optional[requests.Session] = None):
        self.config = config
        self._session = session or requests.Session()

    def complete(self, prompt: Prompt | str, key: Optional[str] = None) -> CompletionResult:
        if isinstance(prompt, Prompt):
            messages = [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ]
        else:
            messages = [{"role": "user", "content": str(prompt)}]
        payload = {
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
        }
        headers = {"Content-Type": "application/json"}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        start = time.monotonic()
        last_exc: Optional[Exception] = None
        for attempt in (1, 2):
            try:
                resp = self._session.post(
                    self.config.endpoint,
                    json=payload,
                    headers=headers,
                    timeout=self.config.timeout_s,
                )
                resp.raise_for_status()
                body = resp.json()
                text = body["choices"][0]["message"]["content"]
                latency = time.monotonic() - start
                if not (text or "").strip():
                    raise EmptyResponseError(
                        f"empty completion from {self.config.endpoint}"
                    )
                return CompletionResult(text=text, latency_s=latency, model=self.config.model)
            except requests.Timeout:
                raise CompletionTimeout(self.config.endpoint, time.monotonic() - start) from None
            except (requests.ConnectionError, requests.HTTPError) as exc:
                last_exc = exc
                log.warning("completion attempt %d failed: %s", attempt, exc)
            except (KeyError, IndexError, ValueError) as exc:
                raise CompletionError(f"malformed completion response: {exc}") from exc
        raise CompletionTransportError(self.config.endpoint, last_exc)  # type: ignore[arg-type]


class MockCompletionService:
    """Fixture-keyed responses so the whole pipeline runs with no network.

    Keys are ``<video_id>:<interval>`` strings; an optional ``default`` entry
    answers everything else.
    """

    def __init__(
        self,
        responses: Mapping[str, str],
        default: Optional[str] = None,
        model: str = "mock",
    ):
        self.responses = dict(responses)
        self.default = default
        self.model = model

    @classmethod
    def from_file(cls, path: Path | str) -> "MockCompletionService":
        raw = json.loads(Path(path).read_text())
        default = raw.pop("default", None)
        return cls(raw, default=default)

    def complete(self, prompt: Prompt | str, key: Optional[str] = None) -> CompletionResult:
        start = time.monotonic()
        text = self.responses.get(key) if key is not None else None
        if text is None:
            text = self.default
        if text is None:
            raise CompletionError(f"mock has no response for key {key!r} and no default")
        return CompletionResult(text=text, latency_s=time.monotonic() - start, model=self.model)


# --- verdict parsing ---------------------------------------------------------

@dataclass(frozen=True)
class RiskJudgment:
    id: int
    intention: str
    risk_level: str
    raw_level: str
    state_key: tuple = ()
    marks: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.risk_level not in RiskLevel.ORDER:
            raise ValueError(f"bad risk_level {self.risk_level!r}")

    @property
    def binary(self) -> str:
        return "risky" if self.risk_level != RiskLevel.NONE else "safe"

    def to_wire(self) -> dict:
        return {"id": self.id, "intention": self.intention, "risk_level": self.risk_level}


@dataclass(frozen=True)
class RiskReport:
    video_id: str
    interval: str
    risks: tuple[RiskJudgment, ...]
    rejected: tuple[RiskJudgment, ...] = ()
    excluded: tuple[RiskJudgment, ...] = ()
    missing: tuple[int, ...] = ()
    raw_response: str = ""
    model: str = ""
    latency_s: float = 0.0
    guarded: bool = False

    def judgment(self, person_id: int) -> Optional[RiskJudgment]:
        for j in self.risks + self.excluded:
            if j.id == person_id:
                return j
        return None

    @property
    def risky_ids(self) -> set[int]:
        return {j.id for j in self.risks if j.risk_level != RiskLevel.NONE}

    def to_wire(self) -> dict:
        return {
            "video_id": self.video_id,
            "interval": self.interval,
            "risks": [j.to_wire() for j in self.risks],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_wire(), indent=2, ensure_ascii=False) + "\n"


_INTENTION_KEYWORDS = (
    ("crossing", ("cross",)),
    ("running", ("run", "rush", "dart")),
    ("walking", ("walk",)),
    ("standing", ("stationary", "stand", "still")),
    ("waiting", ("wait",)),
)

_LOW_RISK_PHRASES = ("low risk", "minor risk", "slight risk", "low-risk")


def _heading_text(line: str) -> Optional[str]:
    """Normalized heading text for Markdown-ish section lines, else None."""
    stripped = line.strip()
    if not stripped:
        return None
    if stripped.startswith("#"):
        return stripped.lstrip("#").strip().rstrip(":").lower()
    # Numbered headings like "2. Safety Evaluation:" also occur in responses.
    head = stripped.rstrip(":")
    if head and head[0].isdigit():
        head = head.lstrip("0123456789.) ").strip()
        return head.lower() or None
    return None


def _split_sections(response: str) -> dict[str, list[str]]:
    sections: dict[str, list[str]] = {}
    current: Optional[str] = None
    for line in response.splitlines():
        heading = _heading_text(line)
        if heading is not None and (
            heading.startswith("safety evaluation") or heading.startswith("potential risks")
        ):
            current = "safety" if heading.startswith("safety") else "risks"
            sections.setdefault(current, [])
            continue
        if current is not None:
            sections[current].append(line)
    return sections


def _parse_person_line(line: str) -> Optional[tuple[int, str]]:
    """`Person <ID> : Safe|Risky` with tolerant spacing; None when not one."""
    stripped = line.strip().lstrip("-*").strip()
    if not stripped.lower().startswith("person"):
        return None
    rest = stripped[len("person"):].strip()
    head, sep, verdict = rest.partition(":")
    if not sep:
        parts = rest.split(None, 1)
        if len(parts) != 2:
            return None
        head, verdict = parts
    head = head.strip()
    if not head.isdigit():
        return None
    verdict = verdict.strip().strip(".!").lower()
    if verdict not in ("safe", "risky"):
        return None
    return int(head), verdict


def _mentions(line_lower: str, person_id: int) -> bool:
    """True when the line names exactly this person id (not a prefix of a longer id)."""
    needle = f"person {person_id}"
    start = 0
    while True:
        idx = line_lower.find(needle, start)
        if idx < 0:
            return False
        after = line_lower[idx + len(needle):idx + len(needle) + 1]
        if not after.isdigit():
            return True
        start = idx + 1


def _intention_for(person_id: int, risk_lines: Sequence[str]) -> str:
    for line in risk_lines:
        low = line.lower()
        if not _mentions(low, person_id):
            continue
        # Token-prefix matching so "sidewalk" never reads as walking.
        tokens = [t.strip(".,;:()!?'\"") for t in low.split()]
        for intention, keys in _INTENTION_KEYWORDS:
            if any(t.startswith(k) for t in tokens for k in keys):
                return intention
        return "unspecified"
    return "unspecified"


def _risk_level_for(person_id: int, verdict: str, risk_lines: Sequence[str]) -> str:
    if verdict == "safe":
        return RiskLevel.NONE
    for line in risk_lines:
        low = line.lower()
        if _mentions(low, person_id) and any(p in low for p in _LOW_RISK_PHRASES):
            return RiskLevel.LOW
    return RiskLevel.HIGH


def _state_key(person: PersonFusionRecord) -> tuple:
    return (
        person.final("surface"),
        person.final("distance_class").value,
        person.final("speed_class").value,
        person.final("position_class").value,
    )


def parse_verdict(response: str, scene: SceneDescription, meta: Optional[CompletionResult] = None) -> RiskReport:
    """Parse a Markdown verdict into a structured report.

    Every ``Person <ID>: Safe|Risky`` line in the Safety Evaluation section
    becomes a judgment; ids absent from the scene are quarantined in
    ``rejected`` (hallucination filter), scene ids the response failed to
    evaluate are listed in ``missing``. Text is never dropped silently: a
    missing section raises with the verbatim response attached.
    """
    sections = _split_sections(response)
    if "safety" not in sections:
        raise VerdictParseError("response has no Safety Evaluation section", response)
    risk_lines = sections.get("risks", [])

    risks: list[RiskJudgment] = []
    rejected: list[RiskJudgment] = []
    seen: set[int] = set()
    for line in sections["safety"]:
        parsed = _parse_person_line(line)
        if parsed is None:
            continue
        person_id, verdict = parsed
        if person_id in seen:
            continue
        seen.add(person_id)
        level = _risk_level_for(person_id, verdict, risk_lines)
        person = scene.person(person_id)
        judgment = RiskJudgment(
            id=person_id,
            intention=_intention_for(person_id, risk_lines),
            risk_level=level,
            raw_level=level,
            state_key=_state_key(person) if person else (),
        )
        if person is None:
            rejected.append(replace(judgment, marks=("hallucinated",)))
        else:
            risks.append(judgment)
    missing = tuple(sorted(scene.person_ids - seen))
    if missing:
        log.info(
            "scene %s %s: ids missing from evaluation: %s",
            scene.video_id,
            scene.interval_label,
            list(missing),
        )
    return RiskReport(
        video_id=scene.video_id,
        interval=scene.interval_label,
        risks=tuple(risks),
        rejected=tuple(rejected),
        missing=missing,
        raw_response=response,
        model=meta.model if meta else "",
        latency_s=meta.latency_s if meta else 0.0,
    )


# --- guards -------------------------------------------------------------------

@dataclass(frozen=True)
class GuardConfig:
    min_confidence: float = 0.3
    approach_test: float = 0.02  # frame-widths/s toward the road
    flip_window: int = 1

    def __post_init__(self) -> None:
        if self.min_confidence <= 0 or self.approach_test <= 0 or self.flip_window <= 0:
            raise ValueError("guard thresholds must be positive")


def _flip_suppressed(
    judgment: RiskJudgment,
    history: Sequence[RiskReport],
    flip_window: int,
) -> bool:
    if judgment.raw_level == RiskLevel.NONE or not history:
        return False
    recent = history[-flip_window:]
    prior = [r.judgment(judgment.id) for r in recent]
    if any(p is None for p in prior):
        return False
    if any(p.raw_level != RiskLevel.NONE for p in prior):
        return False
    # Distance alone changing does not make a flip "supported": the rule keys
    # on position, surface, and speed.
    def proj(key: tuple) -> tuple:
        return (key[0], key[2], key[3]) if len(key) == 4 else key

    return proj(prior[-1].state_key) == proj(judgment.state_key)


def apply_guards(
    report: RiskReport,
    scene: SceneDescription,
    history: Sequence[RiskReport],
    cfg: GuardConfig = GuardConfig(),
) -> RiskReport:
    """Bound the analyst's verdicts with sensor-side evidence.

    Recomputed from each judgment's raw (pre-guard) level, so applying the
    guards twice is a no-op and a guarded level never exceeds the raw one.
    """
    risks: list[RiskJudgment] = []
    excluded: list[RiskJudgment] = []
    for judgment in sorted(report.risks + report.excluded, key=lambda j: j.id):
        person = scene.person(judgment.id)
        base = replace(judgment, risk_level=judgment.raw_level, marks=())
        if person is None:
            risks.append(base)
            continue
        if person.mean_confidence < cfg.min_confidence:
            excluded.append(replace(base, marks=("low_confidence",)))
            continue
        if _flip_suppressed(base, history, cfg.flip_window):
            risks.append(
                replace(base, risk_level=RiskLevel.NONE, marks=("suppressed_flip",))
            )
            continue
        if (
            base.raw_level != RiskLevel.NONE
            and person.final("distance_class") in (DistanceClass.FAR, DistanceClass.VERY_FAR)
            and (person.final("surface") or "").startswith("sidewalk")
            and person.approach_speed < cfg.approach_test
        ):
            risks.append(
                replace(
                    base,
                    risk_level=RiskLevel.one_step_down(base.raw_level),
                    marks=("downgraded",),
                )
            )
            continue
        risks.append(base)
    return replace(report, risks=tuple(risks), excluded=tuple(excluded), guarded=True)


def interval_bounds(interval: str) -> tuple[int, int]:
    start, _, end = interval.partition("-")
    try:
        return int(start), int(end)
    except ValueError as exc:
        raise SceneError(f"bad interval label {interval!r}") from exc


def report_from_wire(doc: Mapping) -> RiskReport:
    """Rebuild a report from its wire JSON (risks only, raw == final level)."""
    return RiskReport(
        video_id=doc["video_id"],
        interval=doc["interval"],
        risks=tuple(
            RiskJudgment(
                id=int(j["id"]),
                intention=j.get("intention", "unspecified"),
                risk_level=j["risk_level"],
                raw_level=j["risk_level"],
            )
            for j in doc["risks"]
        ),
        guarded=True,
    )
