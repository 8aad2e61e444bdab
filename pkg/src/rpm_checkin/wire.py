"""Wire format between the service and the conversation model.

Every completion the model returns must carry a 13-line coverage checklist,
a delimiter line of '=' characters, and the patient-facing reply below it.
This module owns parsing, serialization, checklist merging, and rendering of
the system prompt that instructs the model to produce that shape.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping

from .protocol import KEY_ORDER, ProtocolConfig, QuestionKey

log = logging.getLogger(__name__)

# Emitted delimiter is exactly 14 '='; any line of 3 or more is accepted.
DELIMITER = "=" * 14
_MIN_DELIMITER = 3


class CoverageStatus(str, Enum):
    """How far a question has progressed inside today's conversation."""

    NOT_DISCUSSED = "not discussed"
    IN_DISCUSSION = "in discussion"
    DISCUSSED = "discussed"

    @property
    def rank(self) -> int:
        return _STATUS_RANKS[self]


_STATUS_RANKS = {
    CoverageStatus.NOT_DISCUSSED: 0,
    CoverageStatus.IN_DISCUSSION: 1,
    CoverageStatus.DISCUSSED: 2,
}


class AgentOutputError(Exception):
    """Base class for malformed model completions. Parsing never raises anything else."""


class MissingDelimiter(AgentOutputError):
    def __init__(self) -> None:
        super().__init__("completion has no '=' delimiter line")


class UnknownKey(AgentOutputError):
    def __init__(self, token: str) -> None:
        super().__init__(f"checklist line names unknown question key {token!r}")
        self.token = token


class DuplicateChecklistKey(AgentOutputError):
    def __init__(self, key: QuestionKey) -> None:
        super().__init__(f"checklist repeats question key {key.value!r}")
        self.key = key


class InvalidStatus(AgentOutputError):
    def __init__(self, key: str, token: str) -> None:
        super().__init__(f"checklist line for {key!r} has invalid status {token!r}")
        self.key = key
        self.token = token


class IncompleteChecklist(AgentOutputError):
    def __init__(self, missing: frozenset[QuestionKey]) -> None:
        names = ", ".join(sorted(k.value for k in missing))
        super().__init__(f"checklist is missing keys: {names}")
        self.missing = missing


class EmptyReply(AgentOutputError):
    def __init__(self) -> None:
        super().__init__("completion has no patient-facing reply below the delimiter")


class InvalidReply(AgentOutputError):
    def __init__(self, detail: str) -> None:
        super().__init__(f"reply text is not a valid patient-facing message: {detail}")


class Checklist:
    """Immutable total mapping from every question key to a coverage status."""

    __slots__ = ("_statuses",)

    def __init__(self, statuses: Mapping[QuestionKey, CoverageStatus]) -> None:
        missing = frozenset(k for k in KEY_ORDER if k not in statuses)
        if missing:
            raise IncompleteChecklist(missing)
        unknown = [k for k in statuses if k not in KEY_ORDER]
        if unknown:
            raise UnknownKey(str(unknown[0]))
        self._statuses: tuple[CoverageStatus, ...] = tuple(
            statuses[key] for key in KEY_ORDER
        )

    @classmethod
    def fresh(cls) -> "Checklist":
        return cls({key: CoverageStatus.NOT_DISCUSSED for key in KEY_ORDER})

    def __getitem__(self, key: QuestionKey) -> CoverageStatus:
        return self._statuses[KEY_ORDER.index(key)]

    def items(self) -> tuple[tuple[QuestionKey, CoverageStatus], ...]:
        return tuple(zip(KEY_ORDER, self._statuses))

    def replace(self, key: QuestionKey, status: CoverageStatus) -> "Checklist":
        updated = dict(self.items())
        updated[key] = status
        return Checklist(updated)

    @property
    def is_complete(self) -> bool:
        return all(s is CoverageStatus.DISCUSSED for s in self._statuses)

    def to_dict(self) -> dict[str, str]:
        return {key.value: status.value for key, status in self.items()}

    @classmethod
    def from_dict(cls, raw: Mapping[str, str]) -> "Checklist":
        statuses: dict[QuestionKey, CoverageStatus] = {}
        for token, status_token in raw.items():
            try:
                key = QuestionKey(token)
            except ValueError:
                raise UnknownKey(token) from None
            try:
                status = CoverageStatus(status_token)
            except ValueError:
                raise InvalidStatus(token, str(status_token)) from None
            statuses[key] = status
        return cls(statuses)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Checklist):
            return NotImplemented
        return self._statuses == other._statuses

    def __hash__(self) -> int:
        return hash(self._statuses)

    def __repr__(self) -> str:
        inner = ", ".join(f"{k.value}={s.value!r}" for k, s in self.items())
        return f"Checklist({inner})"


def _is_delimiter(line: str) -> bool:
    stripped = line.strip()
    return len(stripped) >= _MIN_DELIMITER and set(stripped) == {"="}


def _looks_like_checklist_line(line: str) -> bool:
    head, sep, _tail = line.partition(":")
    if not sep:
        return False
    try:
        QuestionKey(head.strip().lower())
    except ValueError:
        return False
    return True


@dataclass(frozen=True)
class AgentTurnOutput:
    """One parsed model completion: reported checklist plus the visible reply.

    The reply is stored stripped and may not itself contain delimiter or
    checklist lines, so serialize/parse round-trips are exact.
    """

    checklist: Checklist
    reply_text: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "reply_text", self.reply_text.strip())
        if not self.reply_text:
            raise EmptyReply()
        for line in self.reply_text.splitlines():
            if _is_delimiter(line):
                raise InvalidReply("reply embeds a delimiter line")
            if _looks_like_checklist_line(line):
                raise InvalidReply(f"reply embeds a checklist line: {line.strip()!r}")


def parse_agent_output(raw: str) -> AgentTurnOutput:
    """Parse a raw completion into checklist + reply.

    Every malformation raises a subclass of AgentOutputError; nothing else
    escapes. The first delimiter line splits the completion; blank lines in
    the checklist block are ignored; status matching is case-insensitive and
    whitespace-normalized; key tokens must match exactly.
    """
    lines = raw.splitlines()
    delim_index = next((i for i, line in enumerate(lines) if _is_delimiter(line)), None)
    if delim_index is None:
        raise MissingDelimiter()

    statuses: dict[QuestionKey, CoverageStatus] = {}
    for line in lines[:delim_index]:
        if not line.strip():
            continue
        head, sep, tail = line.partition(":")
        if not sep:
            raise UnknownKey(line.strip())
        key_token = head.strip()
        try:
            key = QuestionKey(key_token)
        except ValueError:
            raise UnknownKey(key_token) from None
        if key in statuses:
            raise DuplicateChecklistKey(key)
        status_token = " ".join(tail.strip().lower().split())
        try:
            status = CoverageStatus(status_token)
        except ValueError:
            raise InvalidStatus(key_token, tail.strip()) from None
        statuses[key] = status

    missing = frozenset(k for k in KEY_ORDER if k not in statuses)
    if missing:
        raise IncompleteChecklist(missing)

    reply = "\n".join(lines[delim_index + 1 :]).strip()
    if not reply:
        raise EmptyReply()
    return AgentTurnOutput(checklist=Checklist(statuses), reply_text=reply)


def serialize_agent_output(output: AgentTurnOutput) -> str:
    """Render the exact wire shape: 13 checklist lines, delimiter, reply."""
    lines = [f"{key.value}: {status.value}" for key, status in output.checklist.items()]
    lines.append(DELIMITER)
    lines.append(output.reply_text)
    return "\n".join(lines)


def merge_checklist(previous: Checklist, reported: Checklist) -> Checklist:
    """Monotonic merge: per key, keep the further-along status.

    A reported regression (e.g. discussed -> not discussed) never lowers the
    stored status; it is logged and ignored.
    """
    merged: dict[QuestionKey, CoverageStatus] = {}
    for key in KEY_ORDER:
        prev, rep = previous[key], reported[key]
        if rep.rank < prev.rank:
            log.info(
                "checklist regression ignored for %s: %s -> %s",
                key.value,
                prev.value,
                rep.value,
            )
            merged[key] = prev
        else:
            merged[key] = rep
    return Checklist(merged)


def render_checklist_block(checklist: Checklist) -> str:
    return "\n".join(f"{key.value}: {status.value}" for key, status in checklist.items())


def render_system_prompt(protocol: ProtocolConfig) -> str:
    """Render the three-part system prompt: who the agent is, what it asks,
    and how it must run the conversation and format output."""
    parts: list[str] = []

    # Part 1: system definition.
    must = "\n".join(f"{i}. {rule}" for i, rule in enumerate(protocol.allow_guidance, 1))
    must_not = "\n".join(f"{i}. {rule}" for i, rule in enumerate(protocol.deny_guidance, 1))
    parts.append(
        "# System Definition\n\n"
        f"{protocol.persona}\n\n"
        "## Things you must do\n"
        f"{must}\n\n"
        "## Things you must not do\n"
        f"{must_not}"
    )

    # Part 2: clinical guidelines, one block per question.
    question_blocks: list[str] = []
    for i, spec in enumerate(protocol.questions, 1):
        block = [f"{i}. {spec.key.value}: {spec.text}"]
        if spec.followups:
            block.append("   If the patient reports this, follow up with:")
            for followup in spec.followups:
                block.append(f'   - "{followup}"')
        if spec.has_scale:
            block.append(
                "   This question has a 1 to 10 rating. Always collect the rating"
                " when the patient reports the symptom."
            )
        question_blocks.append("\n".join(block))
    parts.append(
        "# Clinical Guidelines\n\n"
        "You must collect the patient's status on every one of the following"
        " 13 key aspects, one question at a time:\n\n" + "\n".join(question_blocks)
    )

    # Part 3: task description, conversation flow and the output contract.
    example_checklist = render_checklist_block(Checklist.fresh())
    parts.append(
        "# Task Description\n\n"
        "## Section 1: Introduction\n"
        f'Open today\'s conversation with: "{protocol.intro_text}"\n'
        "If the patient says they are not ready or does not want to talk,"
        f' reply exactly: "{protocol.decline_text}"\n\n'
        "## Section 2: Health check-in\n"
        "Step 1: If the patient mentions a discomfort, first match it against"
        " the key aspects above and discuss those; ask the follow-up questions"
        " and collect the 1 to 10 rating where the question has one. Then move"
        " through every remaining key aspect, asking one question at a time.\n"
        "Step 2: Before every message, think about the status of each of the"
        " 13 key aspects and mark it on your checklist.\n"
        'Mark a key aspect "discussed" only when one of the following holds:\n'
        "- the patient has explicitly answered no to this key aspect, or\n"
        "- the patient has reported the symptom and you finished its follow-up"
        " questions, including the 1 to 10 rating when the question has one, or\n"
        "- the patient refuses to discuss it further.\n"
        'Mark a key aspect "in discussion" while you are still asking about it.\n'
        'Leave a key aspect "not discussed" if it has not come up yet.\n'
        "Never ask about a key aspect that is already discussed.\n\n"
        "## Section 3: Wrap-up\n"
        "When every key aspect is discussed, close the conversation, for"
        f' example: "{protocol.wrapup_text}"\n\n'
        "## Section 4: Returning patient\n"
        "If the patient comes back later the same day after the wrap-up,"
        f' greet them, for example: "{protocol.reengage_text}" Update the'
        " checklist with anything new they report.\n\n"
        "## Output format\n"
        "Every message you produce has two parts.\n"
        "Part 1: the checklist, one line per key aspect in the order listed"
        ' above, formatted as "<key>: <status>" where <status> is one of'
        ' "not discussed", "in discussion", "discussed".\n'
        f"Then a delimiter line: {DELIMITER}\n"
        "Part 2: the message shown to the patient.\n\n"
        "Example:\n"
        f"{example_checklist}\n"
        f"{DELIMITER}\n"
        f"{protocol.intro_text}"
    )

    return "\n\n".join(parts)
