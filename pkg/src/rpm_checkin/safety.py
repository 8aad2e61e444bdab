"""Safety machinery: reply filtering and outbound identifier scrubbing.

Two independent gates. The reply filter screens every patient-facing message
against a denylist of phrasings the service must never send (condition
assessments, medical instructions, claims of contacting providers). The
scrubber removes patient identifiers from everything sent to the model
provider and refuses dispatch outright if any identifier survives.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import date
from typing import Iterable, Sequence

# Identifier values shorter than this cannot be replaced without mangling
# ordinary words, so their presence rejects the dispatch instead.
MIN_SCRUB_LEN = 3

NAME_PLACEHOLDER = "PATIENT"
DOB_PLACEHOLDER = "REDACTED"


@dataclass(frozen=True)
class SafetyRule:
    """One denylist entry: a literal phrase matched case-insensitively."""

    rule_id: str
    phrase: str


# Curated from observed unsafe behaviors of check-in models. Three groups:
# assessments of the patient's condition, medical instruction/advice, and
# claims that the agent will escalate or contact providers itself.
DEFAULT_RULESET: tuple[SafetyRule, ...] = (
    SafetyRule("assessment.maintaining-well", "maintaining well"),
    SafetyRule("assessment.doing-well", "you are doing well"),
    SafetyRule("assessment.doing-well-contraction", "you're doing well"),
    SafetyRule("assessment.no-concern", "isn't necessarily a cause for concern"),
    SafetyRule("assessment.no-concern-expanded", "is not necessarily a cause for concern"),
    SafetyRule("assessment.not-a-concern", "not a cause for concern"),
    SafetyRule("assessment.nothing-to-worry", "nothing to worry about"),
    SafetyRule("assessment.could-be-a-problem", "could be a problem"),
    SafetyRule("assessment.is-common-for", "is common for"),
    SafetyRule("assessment.is-common-after", "is common after"),
    SafetyRule("assessment.not-uncommon", "not uncommon"),
    SafetyRule("assessment.sounds-normal", "sounds normal"),
    SafetyRule("assessment.perfectly-normal", "perfectly normal"),
    SafetyRule("instruction.i-suggest", "i suggest you"),
    SafetyRule("instruction.i-recommend", "i recommend"),
    SafetyRule("instruction.you-should-take", "you should take"),
    SafetyRule("instruction.be-sure-to-take", "be sure to take"),
    SafetyRule("instruction.report-to-provider", "should be reported to your healthcare provider"),
    SafetyRule("escalation.will-let-provider-know", "i will let your healthcare provider know"),
    SafetyRule("escalation.will-make-sure-to-pass", "i will make sure to pass"),
    SafetyRule("escalation.pass-on-your-concern", "pass on your concern"),
    SafetyRule("escalation.will-contact", "i will contact your"),
    SafetyRule("escalation.will-notify", "i will notify"),
    SafetyRule("escalation.will-send-help", "we will send help"),
)


@dataclass(frozen=True)
class SafetyVerdict:
    """Outcome of screening one reply. matched holds (rule_id, phrase) pairs."""

    allowed: bool
    matched: tuple[tuple[str, str], ...] = ()


def safety_check(reply: str, ruleset: Sequence[SafetyRule] = DEFAULT_RULESET) -> SafetyVerdict:
    """Screen a patient-facing reply. Literal substring match, case-insensitive."""
    lowered = reply.lower()
    matched = tuple(
        (rule.rule_id, rule.phrase) for rule in ruleset if rule.phrase in lowered
    )
    return SafetyVerdict(allowed=not matched, matched=matched)


class ScrubViolation(Exception):
    """An outbound payload still carries a patient identifier."""

    def __init__(self, values: Sequence[str]) -> None:
        super().__init__(
            f"outbound text contains {len(values)} unscrubbed identifier value(s)"
        )
        self.values = tuple(values)


def _dob_renderings(dob: date) -> list[str]:
    return [
        dob.isoformat(),
        dob.strftime("%m/%d/%Y"),
        f"{dob.month}/{dob.day}/{dob.year}",
    ]


@dataclass(frozen=True)
class ScrubRegistry:
    """Identifier values to remove from outbound text, with replacements.

    entries are (value, replacement) pairs, matched case-insensitively on
    word boundaries, longest value first so full names win over name parts.
    """

    entries: tuple[tuple[str, str], ...]

    @classmethod
    def build(cls, identities: Iterable[tuple[str, date]]) -> "ScrubRegistry":
        """Build from (display_name, date_of_birth) pairs.

        Name values shorter than MIN_SCRUB_LEN are kept in the registry so
        their presence still rejects dispatch, even though they cannot be
        safely replaced.
        """
        entries: dict[str, str] = {}
        for name, dob in identities:
            cleaned = name.strip()
            if cleaned:
                entries.setdefault(cleaned.lower(), NAME_PLACEHOLDER)
                for part in cleaned.split():
                    entries.setdefault(part.lower(), NAME_PLACEHOLDER)
            for rendering in _dob_renderings(dob):
                entries.setdefault(rendering.lower(), DOB_PLACEHOLDER)
        ordered = sorted(entries.items(), key=lambda item: len(item[0]), reverse=True)
        return cls(entries=tuple(ordered))

    @property
    def values(self) -> tuple[str, ...]:
        return tuple(value for value, _ in self.entries)


def _value_pattern(value: str) -> re.Pattern[str]:
    return re.compile(rf"(?<!\w){re.escape(value)}(?!\w)", re.IGNORECASE)


def scrub_text(text: str, registry: ScrubRegistry) -> str:
    """Replace every registered identifier in text with its placeholder.

    Raises ScrubViolation for identifiers too short to localize safely: they
    cannot be replaced without corrupting unrelated words, so the text is
    rejected instead.
    """
    result = text
    for value, replacement in registry.entries:
        pattern = _value_pattern(value)
        if len(value) < MIN_SCRUB_LEN:
            if pattern.search(result):
                raise ScrubViolation([value])
            continue
        result = pattern.sub(replacement, result)
    return result


def find_identifier_hits(texts: Iterable[str], values: Sequence[str]) -> list[str]:
    """Return every identifier value that appears in any of the texts."""
    hits: list[str] = []
    for value in values:
        pattern = _value_pattern(value)
        if any(pattern.search(text) for text in texts):
            hits.append(value)
    return hits
