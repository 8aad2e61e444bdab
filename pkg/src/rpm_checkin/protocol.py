"""Check-in protocol: the 13 daily questions and their display semantics.

The protocol is data, not code. The service ships a default protocol file
(``fixtures/protocol.json``) and any deployment can load an edited copy, as
long as it keeps the closed key set and passes validation.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping


class QuestionKey(str, Enum):
    """Closed set of lowercase tokens used on the checklist wire format."""

    BREATHING = "breathing"
    FEVER = "fever"
    STOOLS = "stools"
    PAIN = "pain"
    DRAINAGE = "drainage"
    ACTIVITY = "activity"
    CONSCIOUS = "conscious"
    CONSTIPATION = "constipation"
    DIARRHEA = "diarrhea"
    EATING = "eating"
    SWELLING = "swelling"
    MOOD = "mood"
    MISC = "misc"

    def __str__(self) -> str:  # wire token, not the enum repr
        return self.value


# Canonical ordering: the order questions appear in the checklist block and
# in every per-key iteration across the service.
KEY_ORDER: tuple[QuestionKey, ...] = (
    QuestionKey.BREATHING,
    QuestionKey.FEVER,
    QuestionKey.STOOLS,
    QuestionKey.PAIN,
    QuestionKey.DRAINAGE,
    QuestionKey.ACTIVITY,
    QuestionKey.CONSCIOUS,
    QuestionKey.CONSTIPATION,
    QuestionKey.DIARRHEA,
    QuestionKey.EATING,
    QuestionKey.SWELLING,
    QuestionKey.MOOD,
    QuestionKey.MISC,
)


class SeverityClass(str, Enum):
    """Clinical severity class of a question, fixed by the protocol."""

    MOST_SEVERE = "most_severe"
    MODERATE = "moderate"
    LEAST_SEVERE = "least_severe"
    NOT_APPLICABLE = "not_applicable"

    @property
    def rank(self) -> int:
        """Numeric rank used for triage ordering (higher is more urgent)."""
        return _SEVERITY_RANKS[self]


_SEVERITY_RANKS = {
    SeverityClass.MOST_SEVERE: 4,
    SeverityClass.MODERATE: 3,
    SeverityClass.LEAST_SEVERE: 2,
    SeverityClass.NOT_APPLICABLE: 1,
}


class DisplayColor(str, Enum):
    """Dot colors shown to clinicians."""

    RED = "red"
    YELLOW = "yellow"
    BLUE = "blue"
    PURPLE = "purple"
    GREEN = "green"
    GRAY = "gray"


# Protocol color for a question reported as present, by severity class.
SEVERITY_COLOR: dict[SeverityClass, DisplayColor] = {
    SeverityClass.MOST_SEVERE: DisplayColor.RED,
    SeverityClass.MODERATE: DisplayColor.YELLOW,
    SeverityClass.LEAST_SEVERE: DisplayColor.BLUE,
    SeverityClass.NOT_APPLICABLE: DisplayColor.PURPLE,
}


class ProtocolError(Exception):
    """Base class for protocol validation failures."""


class MissingKey(ProtocolError):
    def __init__(self, key: QuestionKey) -> None:
        super().__init__(f"protocol is missing question key {key.value!r}")
        self.key = key


class DuplicateKey(ProtocolError):
    def __init__(self, key: str) -> None:
        super().__init__(f"protocol defines question key {key!r} more than once")
        self.key = key


class UnknownProtocolKey(ProtocolError):
    def __init__(self, key: str) -> None:
        super().__init__(f"protocol defines unknown question key {key!r}")
        self.key = key


class InvalidSeverity(ProtocolError):
    def __init__(self, key: str, severity: object) -> None:
        super().__init__(f"question {key!r} has invalid severity {severity!r}")
        self.key = key
        self.severity = severity


class ScaleWithoutFollowup(ProtocolError):
    def __init__(self, key: str) -> None:
        super().__init__(
            f"question {key!r} asks for a 1-10 rating but no followup mentions the scale"
        )
        self.key = key


@dataclass(frozen=True)
class QuestionSpec:
    """One protocol question and how its answers are rated and displayed."""

    key: QuestionKey
    text: str
    has_scale: bool
    severity: SeverityClass
    color: DisplayColor
    followups: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "key": self.key.value,
            "text": self.text,
            "has_scale": self.has_scale,
            "severity": self.severity.value,
            "color": self.color.value,
            "followups": list(self.followups),
        }


@dataclass(frozen=True)
class ProtocolConfig:
    """Validated protocol: all 13 questions plus the fixed conversation lines."""

    questions: tuple[QuestionSpec, ...]
    intro_text: str
    decline_text: str
    wrapup_text: str
    reengage_text: str
    persona: str
    allow_guidance: tuple[str, ...]
    deny_guidance: tuple[str, ...]
    version: str = "1"
    _by_key: dict[QuestionKey, QuestionSpec] = field(
        init=False, repr=False, compare=False, default_factory=dict
    )

    def __post_init__(self) -> None:
        validate_questions(self.questions)
        object.__setattr__(
            self, "_by_key", {spec.key: spec for spec in self.questions}
        )

    def question(self, key: QuestionKey) -> QuestionSpec:
        return self._by_key[key]

    @property
    def keys(self) -> tuple[QuestionKey, ...]:
        return tuple(spec.key for spec in self.questions)

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": self.version,
            "intro_text": self.intro_text,
            "decline_text": self.decline_text,
            "wrapup_text": self.wrapup_text,
            "reengage_text": self.reengage_text,
            "persona": self.persona,
            "allow_guidance": list(self.allow_guidance),
            "deny_guidance": list(self.deny_guidance),
            "questions": [spec.to_dict() for spec in self.questions],
        }


def validate_questions(questions: Iterable[QuestionSpec]) -> None:
    """Enforce the closed key set: all 13 present, none twice, scales sane.

    Raises MissingKey, DuplicateKey, or ScaleWithoutFollowup.
    """
    seen: set[QuestionKey] = set()
    for spec in questions:
        if spec.key in seen:
            raise DuplicateKey(spec.key.value)
        seen.add(spec.key)
        if spec.has_scale and not any(
            "scale of 1 to 10" in text.lower() for text in spec.followups
        ):
            raise ScaleWithoutFollowup(spec.key.value)
    for key in KEY_ORDER:
        if key not in seen:
            raise MissingKey(key)


def _question_from_dict(raw: Mapping[str, Any]) -> QuestionSpec:
    key_token = str(raw["key"])
    try:
        key = QuestionKey(key_token)
    except ValueError:
        raise UnknownProtocolKey(key_token) from None
    try:
        severity = SeverityClass(str(raw["severity"]))
    except ValueError:
        raise InvalidSeverity(key_token, raw["severity"]) from None
    try:
        color = DisplayColor(str(raw["color"]))
    except ValueError:
        raise ProtocolError(f"question {key_token!r} has invalid color {raw['color']!r}")
    return QuestionSpec(
        key=key,
        text=str(raw["text"]),
        has_scale=bool(raw.get("has_scale", False)),
        severity=severity,
        color=color,
        followups=tuple(str(f) for f in raw.get("followups", ())),
    )


def protocol_from_dict(raw: Mapping[str, Any]) -> ProtocolConfig:
    """Build and validate a ProtocolConfig from parsed JSON data."""
    questions = tuple(_question_from_dict(q) for q in raw.get("questions", ()))
    return ProtocolConfig(
        questions=questions,
        intro_text=str(raw["intro_text"]),
        decline_text=str(raw["decline_text"]),
        wrapup_text=str(raw["wrapup_text"]),
        reengage_text=str(raw.get("reengage_text", "")),
        persona=str(raw["persona"]),
        allow_guidance=tuple(str(g) for g in raw.get("allow_guidance", ())),
        deny_guidance=tuple(str(g) for g in raw.get("deny_guidance", ())),
        version=str(raw.get("version", "1")),
    )


def load_protocol(path: str | Path) -> ProtocolConfig:
    """Load a protocol file (JSON) and validate it."""
    with open(path, "r", encoding="utf-8") as handle:
        raw = json.load(handle)
    return protocol_from_dict(raw)


def dump_protocol(protocol: ProtocolConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(protocol.to_dict(), handle, indent=2, ensure_ascii=False)
        handle.write("\n")


def default_protocol() -> ProtocolConfig:
    """The protocol shipped with the package."""
    raw = json.loads(
        resources.files("rpm_checkin.fixtures").joinpath("protocol.json").read_text("utf-8")
    )
    return protocol_from_dict(raw)
