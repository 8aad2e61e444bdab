"""Conversation engine: session lifecycle and the per-utterance exchange loop.

One session exists per patient per service day. Every accepted patient
utterance produces exactly two appended turns: the patient turn and an agent
turn, where the agent turn is either a parsed, safety-screened model reply or
the fixed fallback line when the exchange cannot be completed.
"""
from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from enum import Enum
from typing import Any, Callable, Iterable, Mapping, Protocol as TypingProtocol

from . import gateway
from .gateway import ChatRequest, CompletionProvider, GatewayError
from .protocol import ProtocolConfig
from .safety import (
    DEFAULT_RULESET,
    SafetyRule,
    ScrubRegistry,
    ScrubViolation,
    safety_check,
)
from .wire import (
    AgentOutputError,
    AgentTurnOutput,
    Checklist,
    merge_checklist,
    parse_agent_output,
    render_system_prompt,
)

log = logging.getLogger(__name__)

DEFAULT_RETRY_BUDGET = 2
DEFAULT_TURN_CAP = 60
DEFAULT_IDLE_TIMEOUT = timedelta(minutes=30)

PATIENT_ROLE = "patient"
AGENT_ROLE = "agent"


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


class TickClock:
    """Deterministic clock for replay and tests: fixed start, fixed step per call."""

    def __init__(self, start: datetime, step: timedelta = timedelta(seconds=1)) -> None:
        self._next = start
        self._step = step

    def __call__(self) -> datetime:
        now = self._next
        self._next = now + self._step
        return now


class Phase(str, Enum):
    INTRO = "intro"
    CHECKIN = "checkin"
    WRAPUP = "wrapup"
    CLOSED = "closed"


@dataclass
class Turn:
    """One message in a session. turn_id is 1-based and unique in the session."""

    turn_id: int
    role: str
    text: str
    at: datetime

    def to_dict(self) -> dict[str, Any]:
        return {
            "turn_id": self.turn_id,
            "role": self.role,
            "text": self.text,
            "at": self.at.isoformat(),
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "Turn":
        return cls(
            turn_id=int(raw["turn_id"]),
            role=str(raw["role"]),
            text=str(raw["text"]),
            at=datetime.fromisoformat(str(raw["at"])),
        )


@dataclass
class Session:
    """State of one patient-day conversation."""

    session_id: str
    patient_id: str
    service_day: date
    phase: Phase = Phase.INTRO
    turns: list[Turn] = field(default_factory=list)
    checklist: Checklist = field(default_factory=Checklist.fresh)
    created_at: datetime = field(default_factory=utc_now)

    @property
    def next_turn_id(self) -> int:
        return self.turns[-1].turn_id + 1 if self.turns else 1

    @property
    def last_activity(self) -> datetime:
        return self.turns[-1].at if self.turns else self.created_at

    def turn_ids(self) -> frozenset[int]:
        return frozenset(turn.turn_id for turn in self.turns)

    def to_dict(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "patient_id": self.patient_id,
            "service_day": self.service_day.isoformat(),
            "phase": self.phase.value,
            "turns": [turn.to_dict() for turn in self.turns],
            "checklist": self.checklist.to_dict(),
            "created_at": self.created_at.isoformat(),
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "Session":
        return cls(
            session_id=str(raw["session_id"]),
            patient_id=str(raw["patient_id"]),
            service_day=date.fromisoformat(str(raw["service_day"])),
            phase=Phase(str(raw["phase"])),
            turns=[Turn.from_dict(t) for t in raw.get("turns", ())],
            checklist=Checklist.from_dict(raw["checklist"]),
            created_at=datetime.fromisoformat(str(raw["created_at"])),
        )


class SessionStore(TypingProtocol):
    def get_session(self, patient_id: str, service_day: date) -> Session | None: ...
    def put_session(self, session: Session) -> None: ...
    def open_sessions(self) -> list[Session]: ...


class EngineError(Exception):
    """Base class for engine failures."""


class SessionExists(EngineError):
    def __init__(self, patient_id: str, service_day: date) -> None:
        super().__init__(f"session already exists for {patient_id} on {service_day}")
        self.patient_id = patient_id
        self.service_day = service_day


class SessionClosed(EngineError):
    def __init__(self, session_id: str) -> None:
        super().__init__(f"session {session_id} is closed")
        self.session_id = session_id


class EmptyUtterance(EngineError):
    def __init__(self) -> None:
        super().__init__("patient utterance is empty")


class EngineFallback(EngineError):
    """The exchange could not produce a safe, well-formed reply.

    The session already carries the fallback agent turn when this is raised;
    fallback_reply is what the patient was shown.
    """

    def __init__(self, detail: str, fallback_reply: str) -> None:
        super().__init__(detail)
        self.fallback_reply = fallback_reply


class ProviderUnavailable(EngineFallback):
    pass


class MalformedCompletion(EngineFallback):
    pass


class SafetyRejection(EngineFallback):
    """Covers denylist rejections and scrub refusals: nothing unsafe left the service."""


def _format_corrective(error: AgentOutputError) -> str:
    return (
        f"Your last message was not in the required format ({error}). "
        "Resend it now with all 13 checklist lines, then the delimiter line, "
        "then the message for the patient below it."
    )


def _safety_corrective(rule_ids: Iterable[str]) -> str:
    names = ", ".join(rule_ids)
    return (
        f"Your last message used language you must never use ({names}). "
        "Resend the checklist and a message that only collects information, "
        "with no assessments, no medical advice, and no claims that you will "
        "contact or inform anyone."
    )


class ConversationEngine:
    """Drives check-in conversations against a completion provider."""

    def __init__(
        self,
        protocol: ProtocolConfig,
        provider: CompletionProvider,
        store: SessionStore,
        *,
        ruleset: tuple[SafetyRule, ...] | None = None,
        scrub_registry: ScrubRegistry | None = None,
        retry_budget: int = DEFAULT_RETRY_BUDGET,
        turn_cap: int = DEFAULT_TURN_CAP,
        idle_timeout: timedelta = DEFAULT_IDLE_TIMEOUT,
        clock: Callable[[], datetime] = utc_now,
    ) -> None:
        self.protocol = protocol
        self.provider = provider
        self.store = store
        self.ruleset = ruleset if ruleset is not None else DEFAULT_RULESET
        self.scrub_registry = scrub_registry
        self.retry_budget = retry_budget
        self.turn_cap = turn_cap
        self.idle_timeout = idle_timeout
        self.clock = clock
        self.on_close: list[Callable[[Session], None]] = []
        self._system_prompt = render_system_prompt(protocol)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock_for(self, session: Session) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(session.session_id, threading.Lock())

    # -- lifecycle -----------------------------------------------------------

    def start_session(self, patient_id: str, service_day: date) -> Session:
        """Create the (patient, day) session. Raises SessionExists if present."""
        if self.store.get_session(patient_id, service_day) is not None:
            raise SessionExists(patient_id, service_day)
        session = Session(
            session_id=f"{patient_id}:{service_day.isoformat()}",
            patient_id=patient_id,
            service_day=service_day,
            created_at=self.clock(),
        )
        self.store.put_session(session)
        return session

    def resume_or_start(self, patient_id: str, service_day: date) -> Session:
        """Return the day's session, reopening a closed one; create if absent."""
        existing = self.store.get_session(patient_id, service_day)
        if existing is None:
            return self.start_session(patient_id, service_day)
        if existing.phase is Phase.CLOSED:
            return self.reopen_session(existing)
        return existing

    def reopen_session(self, session: Session) -> Session:
        """Reactivate a closed session for same-day follow-up."""
        if session.phase is not Phase.CLOSED:
            return session
        if session.checklist.is_complete:
            session.phase = Phase.WRAPUP
        elif session.turns:
            session.phase = Phase.CHECKIN
        else:
            session.phase = Phase.INTRO
        self.store.put_session(session)
        return session

    def is_complete(self, session: Session) -> bool:
        return session.checklist.is_complete

    def close_session(self, session: Session) -> Session:
        """Close the session and emit the day-closed event. Idempotent: closing
        an already-closed session changes nothing and emits nothing."""
        with self._lock_for(session):
            if session.phase is Phase.CLOSED:
                return session
            session.phase = Phase.CLOSED
            self.store.put_session(session)
        for subscriber in self.on_close:
            subscriber(session)
        return session

    def sweep_idle(self, now: datetime | None = None) -> list[Session]:
        """Close every open session idle beyond the timeout. Returns them."""
        now = now or self.clock()
        closed: list[Session] = []
        for session in self.store.open_sessions():
            if now - session.last_activity >= self.idle_timeout:
                closed.append(self.close_session(session))
        return closed

    # -- the exchange loop ---------------------------------------------------

    def handle_patient_utterance(self, session: Session, text: str) -> str:
        """Append the patient turn, obtain a safe agent reply, return it.

        On any unrecoverable failure the fixed fallback line is appended as
        the agent turn and an EngineFallback subclass is raised carrying it.
        """
        if not text.strip():
            raise EmptyUtterance()
        with self._lock_for(session):
            if session.phase is Phase.CLOSED:
                raise SessionClosed(session.session_id)
            return self._exchange(session, text.strip())

    def _exchange(self, session: Session, text: str) -> str:
        session.turns.append(
            Turn(turn_id=session.next_turn_id, role=PATIENT_ROLE, text=text, at=self.clock())
        )
        self.store.put_session(session)

        base = tuple(
            ("user" if turn.role == PATIENT_ROLE else "assistant", turn.text)
            for turn in session.turns
        )
        extra: list[tuple[str, str]] = []
        attempts_left = self.retry_budget
        failure: EngineFallback

        while True:
            request = ChatRequest(
                system_prompt=self._system_prompt, messages=base + tuple(extra)
            )
            try:
                raw = gateway.complete(self.provider, request, self.scrub_registry)
            except ScrubViolation as exc:
                failure = SafetyRejection(
                    f"identifier scrubbing refused dispatch: {exc}",
                    self.protocol.decline_text,
                )
                break
            except GatewayError as exc:
                failure = ProviderUnavailable(str(exc), self.protocol.decline_text)
                break

            try:
                parsed = parse_agent_output(raw)
            except AgentOutputError as exc:
                log.warning("malformed completion for %s: %s", session.session_id, exc)
                if attempts_left > 0:
                    attempts_left -= 1
                    extra.append(("assistant", raw))
                    extra.append(("user", _format_corrective(exc)))
                    continue
                failure = MalformedCompletion(str(exc), self.protocol.decline_text)
                break

            verdict = safety_check(parsed.reply_text, self.ruleset)
            if not verdict.allowed:
                rule_ids = [rule_id for rule_id, _ in verdict.matched]
                log.warning(
                    "unsafe completion for %s blocked by rules %s",
                    session.session_id,
                    rule_ids,
                )
                if attempts_left > 0:
                    attempts_left -= 1
                    extra.append(("assistant", raw))
                    extra.append(("user", _safety_corrective(rule_ids)))
                    continue
                failure = SafetyRejection(
                    f"reply blocked by safety rules: {rule_ids}",
                    self.protocol.decline_text,
                )
                break

            return self._accept(session, parsed)

        self._append_agent_turn(session, failure.fallback_reply)
        self.store.put_session(session)
        raise failure

    def _accept(self, session: Session, parsed: AgentTurnOutput) -> str:
        session.checklist = merge_checklist(session.checklist, parsed.checklist)
        self._append_agent_turn(session, parsed.reply_text)
        if session.phase is Phase.INTRO:
            session.phase = Phase.CHECKIN
        if session.phase is Phase.CHECKIN and session.checklist.is_complete:
            session.phase = Phase.WRAPUP
        if session.phase is Phase.CHECKIN and len(session.turns) >= self.turn_cap:
            session.phase = Phase.WRAPUP
        self.store.put_session(session)
        return parsed.reply_text

    def _append_agent_turn(self, session: Session, text: str) -> None:
        session.turns.append(
            Turn(turn_id=session.next_turn_id, role=AGENT_ROLE, text=text, at=self.clock())
        )
