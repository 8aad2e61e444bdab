"""Post-conversation analysis: symptom extraction, summaries, daily reports.

After a session closes, the pipeline asks the model to extract a per-symptom
state from the transcript, optionally asks for a clinician-facing summary of
reported symptoms, validates both against strict wire contracts, and writes
the day's report. Validation failures never produce silently-wrong reports:
after the retry budget the report is flagged for manual review instead.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from datetime import date, datetime
from typing import Any, Callable, Mapping, Sequence

from . import gateway
from .engine import Session, utc_now
from .gateway import ChatRequest, CompletionProvider
from .protocol import (
    KEY_ORDER,
    SEVERITY_COLOR,
    DisplayColor,
    ProtocolConfig,
    QuestionKey,
    SeverityClass,
)
from .safety import ScrubRegistry

log = logging.getLogger(__name__)

STATE_NOT_DISCUSSED = 0
STATE_NOT_PRESENT = 1
STATE_PRESENT = 2

DEFAULT_EXTRACTION_RETRIES = 1

# Short symptom labels used in the analysis prompts, keyed by protocol key.
EXTRACTION_LABELS: dict[QuestionKey, str] = {
    QuestionKey.BREATHING: "Difficulty Breathing",
    QuestionKey.FEVER: "Fever",
    QuestionKey.STOOLS: "Black, Tar-like Stools",
    QuestionKey.PAIN: "Pain Increase or Unbearable",
    QuestionKey.DRAINAGE: "Wound Drainage Problems",
    QuestionKey.ACTIVITY: "Decrease in Daily Activities",
    QuestionKey.CONSCIOUS: "Decrease in Level of Consciousness",
    QuestionKey.CONSTIPATION: "Persistent Constipation, Nausea, or Vomiting",
    QuestionKey.DIARRHEA: "Persistent Diarrhea",
    QuestionKey.EATING: "Inability to Tolerate Food or Drink",
    QuestionKey.SWELLING: "Pain or swelling in legs",
    QuestionKey.MOOD: "Feeling Down or Depressed",
    QuestionKey.MISC: "Other Symptoms",
}


class AnalysisError(Exception):
    """Base class for extraction/summarization validation failures."""


class NotJson(AnalysisError):
    def __init__(self, detail: str) -> None:
        super().__init__(f"completion is not the expected JSON: {detail}")


class UnknownSymptomKey(AnalysisError):
    def __init__(self, key: str) -> None:
        super().__init__(f"extraction names unknown symptom key {key!r}")
        self.key = key


class MissingSymptomKey(AnalysisError):
    def __init__(self, key: QuestionKey) -> None:
        super().__init__(f"extraction is missing symptom key {key.value!r}")
        self.key = key


class BadState(AnalysisError):
    def __init__(self, key: str, value: object) -> None:
        super().__init__(f"symptom {key!r} has invalid state {value!r}")
        self.key = key
        self.value = value


class BadScale(AnalysisError):
    def __init__(self, key: str, value: object) -> None:
        super().__init__(f"symptom {key!r} has invalid scale {value!r}")
        self.key = key
        self.value = value


class DanglingLogId(AnalysisError):
    def __init__(self, value: object, key: str | None = None) -> None:
        where = f" for symptom {key!r}" if key else ""
        super().__init__(f"log id {value!r}{where} does not exist in the session")
        self.key = key
        self.value = value


class InsufficientLogs(AnalysisError):
    def __init__(self, key: str, count: int) -> None:
        super().__init__(
            f"symptom {key!r} was discussed but links only {count} log id(s);"
            " a discussed symptom needs the question and the response"
        )
        self.key = key
        self.count = count


class BadEnvelope(AnalysisError):
    def __init__(self, detail: str) -> None:
        super().__init__(f"summary envelope is malformed: {detail}")


class BadCategory(AnalysisError):
    def __init__(self, value: object) -> None:
        super().__init__(f'summary entry category is not "Summary": {value!r}')
        self.value = value


class ForeignLogIds(AnalysisError):
    """A summary cites logs that do not belong to any reported-present symptom."""

    def __init__(self, ids: Sequence[int]) -> None:
        super().__init__(
            f"summary cites log ids outside the reported symptoms: {sorted(ids)}"
        )
        self.ids = tuple(ids)


@dataclass(frozen=True)
class SymptomFinding:
    """Extracted status of one symptom for one day.

    state: 0 never discussed, 1 asked and not reported present, 2 reported
    present. scale is only meaningful for questions with a 1-10 rating and
    only populated nonzero when state is 2.
    """

    key: QuestionKey
    state: int
    scale: int | None
    log_ids: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.state not in (0, 1, 2):
            raise BadState(self.key.value, self.state)
        if self.scale is not None and not 0 <= self.scale <= 10:
            raise BadScale(self.key.value, self.scale)
        if self.state != STATE_PRESENT and self.scale not in (None, 0):
            raise BadScale(self.key.value, self.scale)
        if self.state >= STATE_NOT_PRESENT and len(self.log_ids) < 2:
            raise InsufficientLogs(self.key.value, len(self.log_ids))

    def to_dict(self) -> dict[str, Any]:
        return {
            "key": self.key.value,
            "state": self.state,
            "scale": self.scale,
            "log_ids": list(self.log_ids),
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "SymptomFinding":
        scale = raw.get("scale")
        return cls(
            key=QuestionKey(str(raw["key"])),
            state=int(raw["state"]),
            scale=None if scale is None else int(scale),
            log_ids=tuple(int(v) for v in raw.get("log_ids", ())),
        )


@dataclass(frozen=True)
class ExtractionResult:
    """Total mapping of all 13 symptom keys to findings."""

    findings: tuple[SymptomFinding, ...]

    def __post_init__(self) -> None:
        keys = [finding.key for finding in self.findings]
        for key in KEY_ORDER:
            if key not in keys:
                raise MissingSymptomKey(key)
        if len(keys) != len(set(keys)):
            raise UnknownSymptomKey("duplicate finding keys")

    @classmethod
    def empty(cls) -> "ExtractionResult":
        return cls(
            findings=tuple(
                SymptomFinding(key=key, state=0, scale=None, log_ids=())
                for key in KEY_ORDER
            )
        )

    def finding(self, key: QuestionKey) -> SymptomFinding:
        for candidate in self.findings:
            if candidate.key is key:
                return candidate
        raise MissingSymptomKey(key)

    def state2_keys(self) -> tuple[QuestionKey, ...]:
        return tuple(f.key for f in self.findings if f.state == STATE_PRESENT)

    def state2_log_ids(self) -> frozenset[int]:
        ids: set[int] = set()
        for finding in self.findings:
            if finding.state == STATE_PRESENT:
                ids.update(finding.log_ids)
        return frozenset(ids)

    def all_log_ids(self) -> frozenset[int]:
        ids: set[int] = set()
        for finding in self.findings:
            ids.update(finding.log_ids)
        return frozenset(ids)

    def to_dict(self) -> dict[str, Any]:
        return {f.key.value: f.to_dict() for f in self.findings}

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "ExtractionResult":
        return cls(
            findings=tuple(
                SymptomFinding.from_dict(raw[key.value]) for key in KEY_ORDER
            )
        )


@dataclass(frozen=True)
class SummaryEntry:
    """One clinician-facing summary bullet, linked to transcript turns."""

    category: str
    log_ids: tuple[int, ...]
    content: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "category": self.category,
            "log_ids": list(self.log_ids),
            "content": self.content,
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "SummaryEntry":
        return cls(
            category=str(raw["category"]),
            log_ids=tuple(int(v) for v in raw.get("log_ids", ())),
            content=str(raw["content"]),
        )


@dataclass
class ReviewState:
    """Clinician review/read tracking for one report."""

    unread: bool = True
    reviewed: bool = False
    reviewer: str | None = None
    reviewed_at: datetime | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "unread": self.unread,
            "reviewed": self.reviewed,
            "reviewer": self.reviewer,
            "reviewed_at": self.reviewed_at.isoformat() if self.reviewed_at else None,
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "ReviewState":
        reviewed_at = raw.get("reviewed_at")
        return cls(
            unread=bool(raw.get("unread", True)),
            reviewed=bool(raw.get("reviewed", False)),
            reviewer=raw.get("reviewer"),
            reviewed_at=datetime.fromisoformat(reviewed_at) if reviewed_at else None,
        )


@dataclass(frozen=True)
class SeverityOverride:
    """Clinician-set severity for one symptom on one report. Audited."""

    key: QuestionKey
    severity: SeverityClass
    author: str
    at: datetime

    def to_dict(self) -> dict[str, Any]:
        return {
            "key": self.key.value,
            "severity": self.severity.value,
            "author": self.author,
            "at": self.at.isoformat(),
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "SeverityOverride":
        return cls(
            key=QuestionKey(str(raw["key"])),
            severity=SeverityClass(str(raw["severity"])),
            author=str(raw["author"]),
            at=datetime.fromisoformat(str(raw["at"])),
        )


@dataclass(frozen=True)
class RankPin:
    """Clinician-set patient rank for one day; wins over the computed rank."""

    rank: int
    author: str
    at: datetime

    def __post_init__(self) -> None:
        if not 0 <= self.rank <= 4:
            raise ValueError(f"rank pin out of range: {self.rank}")

    def to_dict(self) -> dict[str, Any]:
        return {"rank": self.rank, "author": self.author, "at": self.at.isoformat()}

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "RankPin":
        return cls(
            rank=int(raw["rank"]),
            author=str(raw["author"]),
            at=datetime.fromisoformat(str(raw["at"])),
        )


@dataclass(frozen=True)
class Note:
    """Free-text clinician note attached to a report."""

    author: str
    at: datetime
    text: str

    def to_dict(self) -> dict[str, Any]:
        return {"author": self.author, "at": self.at.isoformat(), "text": self.text}

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "Note":
        return cls(
            author=str(raw["author"]),
            at=datetime.fromisoformat(str(raw["at"])),
            text=str(raw["text"]),
        )


@dataclass
class DailyReport:
    """Everything a clinician sees for one patient-day."""

    patient_id: str
    service_day: date
    extraction: ExtractionResult
    summaries: list[SummaryEntry] = field(default_factory=list)
    notes: list[Note] = field(default_factory=list)
    review: ReviewState = field(default_factory=ReviewState)
    overrides: list[SeverityOverride] = field(default_factory=list)
    rank_pin: RankPin | None = None
    needs_review: bool = False
    generated_at: datetime = field(default_factory=utc_now)

    def effective_severity(
        self, key: QuestionKey, protocol: ProtocolConfig
    ) -> SeverityClass:
        """Protocol severity unless a clinician override exists; last override wins."""
        severity = protocol.question(key).severity
        for override in self.overrides:
            if override.key is key:
                severity = override.severity
        return severity

    def rank(self, protocol: ProtocolConfig) -> int:
        """Patient-day urgency rank 0-4. Pin wins; otherwise the max effective
        severity rank over reported-present symptoms; 0 when none reported."""
        if self.rank_pin is not None:
            return self.rank_pin.rank
        state2 = self.extraction.state2_keys()
        if not state2:
            return 0
        return max(self.effective_severity(key, protocol).rank for key in state2)

    def display(self, protocol: ProtocolConfig) -> dict[str, dict[str, Any]]:
        return render_symptom_status(self.extraction, self.overrides, protocol)

    def to_dict(self) -> dict[str, Any]:
        return {
            "patient_id": self.patient_id,
            "service_day": self.service_day.isoformat(),
            "extraction": self.extraction.to_dict(),
            "summaries": [entry.to_dict() for entry in self.summaries],
            "notes": [note.to_dict() for note in self.notes],
            "review": self.review.to_dict(),
            "overrides": [override.to_dict() for override in self.overrides],
            "rank_pin": self.rank_pin.to_dict() if self.rank_pin else None,
            "needs_review": self.needs_review,
            "generated_at": self.generated_at.isoformat(),
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "DailyReport":
        rank_pin = raw.get("rank_pin")
        return cls(
            patient_id=str(raw["patient_id"]),
            service_day=date.fromisoformat(str(raw["service_day"])),
            extraction=ExtractionResult.from_dict(raw["extraction"]),
            summaries=[SummaryEntry.from_dict(e) for e in raw.get("summaries", ())],
            notes=[Note.from_dict(n) for n in raw.get("notes", ())],
            review=ReviewState.from_dict(raw.get("review", {})),
            overrides=[SeverityOverride.from_dict(o) for o in raw.get("overrides", ())],
            rank_pin=RankPin.from_dict(rank_pin) if rank_pin else None,
            needs_review=bool(raw.get("needs_review", False)),
            generated_at=datetime.fromisoformat(str(raw["generated_at"])),
        )


def render_symptom_status(
    extraction: ExtractionResult,
    overrides: Sequence[SeverityOverride],
    protocol: ProtocolConfig,
) -> dict[str, dict[str, Any]]:
    """Per-key display slots: a pure function of (state, severity, overrides).

    Reported-present symptoms take the color of their effective severity
    class; asked-and-denied shows green; never-discussed shows gray. The
    1-10 scale is shown only for rating questions reported present.
    """
    effective: dict[QuestionKey, SeverityClass] = {
        key: protocol.question(key).severity for key in KEY_ORDER
    }
    for override in overrides:
        effective[override.key] = override.severity

    slots: dict[str, dict[str, Any]] = {}
    for finding in extraction.findings:
        spec = protocol.question(finding.key)
        if finding.state == STATE_PRESENT:
            color = SEVERITY_COLOR[effective[finding.key]]
            severity: str | None = effective[finding.key].value
        elif finding.state == STATE_NOT_PRESENT:
            color = DisplayColor.GREEN
            severity = None
        else:
            color = DisplayColor.GRAY
            severity = None
        scale = (
            finding.scale
            if spec.has_scale and finding.state == STATE_PRESENT
            else None
        )
        slots[finding.key.value] = {
            "state": finding.state,
            "color": color.value,
            "severity": severity,
            "scale": scale,
            "log_ids": list(finding.log_ids),
        }
    return slots


# -- prompt rendering ---------------------------------------------------------


def render_conversation_log(session: Session) -> str:
    """Transcript as numbered single-line entries the analysis prompts cite."""
    lines = []
    for turn in session.turns:
        role = "user" if turn.role == "patient" else "assistant"
        text = " ".join(turn.text.split())
        lines.append(f"[{turn.turn_id}] {role}: {text}")
    return "\n".join(lines)


def render_extraction_prompt(protocol: ProtocolConfig) -> str:
    symptom_lines = "\n".join(
        f'- {key.value}: "{EXTRACTION_LABELS[key]}", likert: '
        f"{'true' if protocol.question(key).has_scale else 'false'}"
        for key in KEY_ORDER
    )
    return (
        "You are given today's check-in conversation between a patient (user)"
        " and the check-in assistant. Each message is prefixed with its log id"
        " in square brackets. Review the whole conversation and extract the"
        " patient's status for every symptom listed below.\n\n"
        "Symptom keys:\n"
        f"{symptom_lines}\n\n"
        "For each symptom key:\n"
        '1. Collect the log ids of every message relevant to the symptom in "logs",'
        " including the assistant question and the patient response."
        " EACH DISCUSSED SYMPTOM SHOULD HAVE AT LEAST TWO MESSAGES (QUESTION AND"
        " RESPONSE).\n"
        '2. Set "state": if the conversation did not talk about the symptom,'
        " echo 0. If the patient reported having the symptom, echo 2."
        " Otherwise echo 1.\n"
        '3. Set "scale" only for symptoms marked likert: true: echo 0 if the'
        " patient did not report having the symptom, otherwise echo the"
        " patient's 1 to 10 rating as an integer. If the symptom is marked"
        " likert: false, do not output this value.\n\n"
        "Output a single JSON object of this exact shape:\n"
        '{"<symptom key>": {"logs": [<log ids>], "state": <0, 1 or 2>,'
        ' "scale": <0 to 10>}, ...}\n'
        "with one entry for every symptom key listed above.\n"
        "RETURN ONLY THE JSON AND NOTHING ELSE. DO NOT ENCLOSE IT IN ```."
    )


def render_summarization_prompt(
    protocol: ProtocolConfig, extraction: ExtractionResult
) -> str:
    reported = ", ".join(
        f"{key.value} ({EXTRACTION_LABELS[key]})" for key in extraction.state2_keys()
    )
    return (
        "You are given today's check-in conversation between a patient (user)"
        " and the check-in assistant. Each message is prefixed with its log id"
        " in square brackets. The patient reported having these symptoms"
        f" today: {reported}.\n\n"
        "Write a concise summary of what the patient reported, for the"
        " clinical team, citing the log ids of the messages the summary is"
        " based on.\n\n"
        "Output a single JSON object of this exact shape:\n"
        '{"result": [{"category": "Summary", "conversation_log_ids":'
        ' "[<log id>, <log id>]", "content": "<summary text>"}]}\n'
        'The "conversation_log_ids" value is the string form of the id array.\n'
        "RETURN ONLY THE JSON AND NOTHING ELSE. DO NOT ENCLOSE IT IN ```."
    )


# -- validation ---------------------------------------------------------------


def strip_code_fence(text: str) -> str:
    """Remove one wrapping ``` fence if present. The only tolerated decoration."""
    stripped = text.strip()
    if not stripped.startswith("```"):
        return stripped
    lines = stripped.splitlines()
    if len(lines) >= 2 and lines[-1].strip() == "```":
        return "\n".join(lines[1:-1]).strip()
    return stripped


def _as_int(value: object) -> int | None:
    if isinstance(value, bool) or not isinstance(value, int):
        return None
    return value


def validate_extraction(
    raw: str, session: Session, protocol: ProtocolConfig
) -> ExtractionResult:
    """Validate an extraction completion against the session.

    Strict on the wire contract: exactly the 13 keys, integer states 0/1/2,
    scales only on rating questions (0 unless reported present, else 1-10),
    every log id resolving to a session turn, and at least two linked
    messages for anything discussed. Code fences are stripped; nothing else
    is repaired.
    """
    text = strip_code_fence(raw)
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NotJson(str(exc)) from exc
    if not isinstance(payload, dict):
        raise NotJson(f"expected an object, got {type(payload).__name__}")

    for token in payload:
        try:
            QuestionKey(str(token))
        except ValueError:
            raise UnknownSymptomKey(str(token)) from None

    valid_ids = session.turn_ids()
    findings: list[SymptomFinding] = []
    for key in KEY_ORDER:
        if key.value not in payload:
            raise MissingSymptomKey(key)
        entry = payload[key.value]
        if not isinstance(entry, dict):
            raise BadState(key.value, entry)

        state = _as_int(entry.get("state"))
        if state is None or state not in (0, 1, 2):
            raise BadState(key.value, entry.get("state"))

        raw_logs = entry.get("logs", [])
        if not isinstance(raw_logs, list):
            raise DanglingLogId(raw_logs, key.value)
        log_ids: list[int] = []
        for value in raw_logs:
            log_id = _as_int(value)
            if log_id is None or log_id not in valid_ids:
                raise DanglingLogId(value, key.value)
            log_ids.append(log_id)

        has_scale = protocol.question(key).has_scale
        scale: int | None = None
        if "scale" in entry:
            if not has_scale:
                raise BadScale(key.value, entry["scale"])
            scale = _as_int(entry["scale"])
            if scale is None:
                raise BadScale(key.value, entry["scale"])
            if state == STATE_PRESENT:
                if not 1 <= scale <= 10:
                    raise BadScale(key.value, scale)
            elif scale != 0:
                raise BadScale(key.value, scale)
        elif has_scale and state == STATE_PRESENT:
            raise BadScale(key.value, None)

        if state >= STATE_NOT_PRESENT and len(log_ids) < 2:
            raise InsufficientLogs(key.value, len(log_ids))

        findings.append(
            SymptomFinding(key=key, state=state, scale=scale, log_ids=tuple(log_ids))
        )
    return ExtractionResult(findings=tuple(findings))


def _parse_log_id_array(value: object) -> list[object]:
    """The wire sends the id array as a string ("[1698, 1699]"); accept a real
    array too."""
    if isinstance(value, list):
        return value
    if isinstance(value, str):
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError as exc:
            raise BadEnvelope(f"conversation_log_ids is not an id array: {value!r}") from exc
        if isinstance(parsed, list):
            return parsed
        raise BadEnvelope(f"conversation_log_ids is not an id array: {value!r}")
    raise BadEnvelope(f"conversation_log_ids is not an id array: {value!r}")


def validate_summaries(
    raw: str, session: Session, extraction: ExtractionResult | None = None
) -> list[SummaryEntry]:
    """Validate a summarization completion.

    Requires the {"result": [...]} envelope with category "Summary" entries.
    Log ids must resolve to session turns; when the extraction is supplied
    they must also belong to a reported-present symptom.
    """
    text = strip_code_fence(raw)
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NotJson(str(exc)) from exc
    if not isinstance(payload, dict) or "result" not in payload:
        raise BadEnvelope('missing "result" key')
    result = payload["result"]
    if not isinstance(result, list):
        raise BadEnvelope('"result" is not a list')

    valid_ids = session.turn_ids()
    allowed_ids = extraction.state2_log_ids() if extraction is not None else None
    entries: list[SummaryEntry] = []
    for item in result:
        if not isinstance(item, dict):
            raise BadEnvelope(f"entry is not an object: {item!r}")
        if item.get("category") != "Summary":
            raise BadCategory(item.get("category"))
        content = item.get("content")
        if not isinstance(content, str) or not content.strip():
            raise BadEnvelope("entry content is empty")
        log_ids: list[int] = []
        for value in _parse_log_id_array(item.get("conversation_log_ids", "[]")):
            log_id = _as_int(value)
            if log_id is None or log_id not in valid_ids:
                raise DanglingLogId(value)
            log_ids.append(log_id)
        if allowed_ids is not None:
            foreign = [log_id for log_id in log_ids if log_id not in allowed_ids]
            if foreign:
                raise ForeignLogIds(foreign)
        entries.append(
            SummaryEntry(category="Summary", log_ids=tuple(log_ids), content=content)
        )
    return entries


# -- orchestration ------------------------------------------------------------


def _analysis_request(prompt: str, session: Session) -> ChatRequest:
    return ChatRequest(
        system_prompt=prompt,
        messages=(("user", render_conversation_log(session)),),
        temperature=0.0,
        max_tokens=1200,
    )


def run_extraction(
    session: Session,
    provider: CompletionProvider,
    protocol: ProtocolConfig,
    *,
    registry: ScrubRegistry | None = None,
    retries: int = DEFAULT_EXTRACTION_RETRIES,
) -> ExtractionResult:
    """Ask the model for the per-symptom extraction and validate it.

    Retries once (by default) on validation failure with a corrective
    message, then raises the validation error. Provider errors propagate.
    """
    prompt = render_extraction_prompt(protocol)
    base = _analysis_request(prompt, session)
    extra: list[tuple[str, str]] = []
    attempts_left = retries
    while True:
        request = ChatRequest(
            system_prompt=base.system_prompt,
            messages=base.messages + tuple(extra),
            temperature=base.temperature,
            max_tokens=base.max_tokens,
        )
        raw = gateway.complete(provider, request, registry)
        try:
            return validate_extraction(raw, session, protocol)
        except AnalysisError as exc:
            log.warning("invalid extraction for %s: %s", session.session_id, exc)
            if attempts_left <= 0:
                raise
            attempts_left -= 1
            extra.append(("assistant", raw))
            extra.append(
                (
                    "user",
                    f"Your output was invalid ({exc}). Output only the JSON"
                    " object in the exact shape requested, covering every"
                    " symptom key.",
                )
            )


def run_summarization(
    session: Session,
    extraction: ExtractionResult,
    provider: CompletionProvider,
    protocol: ProtocolConfig,
    *,
    registry: ScrubRegistry | None = None,
) -> list[SummaryEntry]:
    """Summarize reported symptoms. Never calls the provider when the patient
    reported nothing (no state-2 findings): returns [] immediately."""
    if not extraction.state2_keys():
        return []
    prompt = render_summarization_prompt(protocol, extraction)
    raw = gateway.complete(provider, _analysis_request(prompt, session), registry)
    return validate_summaries(raw, session, extraction)


def compute_patient_severity(report: DailyReport, protocol: ProtocolConfig) -> int:
    """Patient-day urgency rank 0-4: max effective severity over reported
    symptoms, with a clinician rank pin winning outright."""
    return report.rank(protocol)


def run_pipeline(
    session: Session,
    provider: CompletionProvider,
    protocol: ProtocolConfig,
    store: Any,
    *,
    registry: ScrubRegistry | None = None,
    clock: Callable[[], datetime] = utc_now,
) -> DailyReport:
    """Produce and persist the daily report for a closed session.

    Idempotent per (patient, day): reruns replace extraction, summaries and
    the review-needed flag but preserve clinician-owned state (notes, review,
    severity overrides, rank pin). Analysis failures past the retry budget
    yield an empty extraction flagged needs_review rather than no report.
    """
    needs_review = False
    try:
        extraction = run_extraction(
            session, provider, protocol, registry=registry
        )
    except AnalysisError as exc:
        log.error("extraction failed for %s: %s", session.session_id, exc)
        extraction = ExtractionResult.empty()
        needs_review = True

    summaries: list[SummaryEntry] = []
    if not needs_review:
        try:
            summaries = run_summarization(
                session, extraction, provider, protocol, registry=registry
            )
        except AnalysisError as exc:
            log.error("summarization failed for %s: %s", session.session_id, exc)
            summaries = []
            needs_review = True

    existing = store.get_report(session.patient_id, session.service_day)
    report = DailyReport(
        patient_id=session.patient_id,
        service_day=session.service_day,
        extraction=extraction,
        summaries=summaries,
        notes=list(existing.notes) if existing else [],
        review=existing.review if existing else ReviewState(),
        overrides=list(existing.overrides) if existing else [],
        rank_pin=existing.rank_pin if existing else None,
        needs_review=needs_review,
        generated_at=clock(),
    )
    store.put_report(report)
    return report
