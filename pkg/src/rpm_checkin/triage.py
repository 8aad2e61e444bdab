"""Clinician triage: who to look at first, and the edits clinicians make.

The patient list for a day is sorted so unreviewed patients come first, most
urgent rank first, most recent report first, with patient id as the final
tiebreaker. Every clinician edit (severity override, rank pin, review mark,
note) is applied through this module so audit fields stay consistent.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import date, datetime
from typing import Any, Callable

from .pipeline import DailyReport, Note, RankPin, SeverityOverride
from .protocol import DisplayColor, ProtocolConfig, QuestionKey, SeverityClass
from .engine import utc_now
from .store import PatientRecord, Store

log = logging.getLogger(__name__)

# Dot color for a patient-day rank on the triage list.
RANK_COLORS: dict[int, DisplayColor] = {
    4: DisplayColor.RED,
    3: DisplayColor.YELLOW,
    2: DisplayColor.BLUE,
    1: DisplayColor.PURPLE,
    0: DisplayColor.GREEN,
}


class TriageError(Exception):
    """Base class for triage operation failures."""


class UnknownReport(TriageError):
    def __init__(self, patient_id: str, service_day: date) -> None:
        super().__init__(f"no report for {patient_id} on {service_day}")
        self.patient_id = patient_id
        self.service_day = service_day


class EmptyNote(TriageError):
    def __init__(self) -> None:
        super().__init__("note text is empty")


class InvalidKey(TriageError):
    def __init__(self, token: str) -> None:
        super().__init__(f"unknown symptom key {token!r}")
        self.token = token


def coerce_key(token: str) -> QuestionKey:
    try:
        return QuestionKey(token)
    except ValueError:
        raise InvalidKey(token) from None


@dataclass(frozen=True)
class PatientOverview:
    """One row of the triage list."""

    patient_id: str
    display_name: str
    demographics: str
    surgery: str
    rank: int
    dot_color: DisplayColor
    has_report: bool
    needs_review: bool
    reviewed: bool
    unread: bool
    report_generated_at: datetime | None

    def to_dict(self) -> dict[str, Any]:
        return {
            "patient_id": self.patient_id,
            "display_name": self.display_name,
            "demographics": self.demographics,
            "surgery": self.surgery,
            "rank": self.rank,
            "dot_color": self.dot_color.value,
            "has_report": self.has_report,
            "needs_review": self.needs_review,
            "reviewed": self.reviewed,
            "unread": self.unread,
            "report_generated_at": (
                self.report_generated_at.isoformat()
                if self.report_generated_at
                else None
            ),
        }


def overview_for(
    patient: PatientRecord, report: DailyReport | None, protocol: ProtocolConfig
) -> PatientOverview:
    if report is None:
        return PatientOverview(
            patient_id=patient.patient_id,
            display_name=patient.display_name,
            demographics=patient.demographics,
            surgery=patient.surgery,
            rank=0,
            dot_color=RANK_COLORS[0],
            has_report=False,
            needs_review=False,
            reviewed=False,
            unread=False,
            report_generated_at=None,
        )
    rank = report.rank(protocol)
    return PatientOverview(
        patient_id=patient.patient_id,
        display_name=patient.display_name,
        demographics=patient.demographics,
        surgery=patient.surgery,
        rank=rank,
        dot_color=RANK_COLORS[rank],
        has_report=True,
        needs_review=report.needs_review,
        reviewed=report.review.reviewed,
        unread=report.review.unread,
        report_generated_at=report.generated_at,
    )


def sort_key(overview: PatientOverview) -> tuple:
    """Not-reviewed first, rank descending, latest report first, id ascending."""
    timestamp = (
        overview.report_generated_at.timestamp()
        if overview.report_generated_at is not None
        else float("-inf")
    )
    return (overview.reviewed, -overview.rank, -timestamp, overview.patient_id)


def list_patients_sorted(
    store: Store, service_day: date, protocol: ProtocolConfig
) -> list[PatientOverview]:
    """Triage-ordered overview of every enrolled patient for one day.

    Patients without a report for the day appear at rank 0 (green) so
    silent patients stay visible.
    """
    overviews = [
        overview_for(patient, store.get_report(patient.patient_id, service_day), protocol)
        for patient in store.all_patients()
    ]
    return sorted(overviews, key=sort_key)


def _require_report(store: Store, patient_id: str, service_day: date) -> DailyReport:
    report = store.get_report(patient_id, service_day)
    if report is None:
        raise UnknownReport(patient_id, service_day)
    return report


def mark_opened(store: Store, patient_id: str, service_day: date) -> DailyReport:
    """Record that a clinician fetched the report: clears the unread flag."""
    report = _require_report(store, patient_id, service_day)
    if report.review.unread:
        report.review.unread = False
        store.put_report(report)
    return report


def mark_reviewed(
    store: Store,
    patient_id: str,
    service_day: date,
    reviewer: str,
    *,
    clock: Callable[[], datetime] = utc_now,
) -> DailyReport:
    """Mark reviewed (idempotent). Reviewed implies read."""
    report = _require_report(store, patient_id, service_day)
    if not report.review.reviewed:
        report.review.reviewed = True
        report.review.reviewer = reviewer
        report.review.reviewed_at = clock()
    report.review.unread = False
    store.put_report(report)
    return report


def apply_severity_override(
    store: Store,
    patient_id: str,
    service_day: date,
    key: QuestionKey,
    severity: SeverityClass,
    author: str,
    *,
    clock: Callable[[], datetime] = utc_now,
) -> DailyReport:
    """Append an audited severity override for one symptom; last one wins."""
    report = _require_report(store, patient_id, service_day)
    report.overrides.append(
        SeverityOverride(key=key, severity=severity, author=author, at=clock())
    )
    store.put_report(report)
    log.info(
        "severity override: %s/%s %s -> %s by %s",
        patient_id,
        service_day,
        key.value,
        severity.value,
        author,
    )
    return report


def apply_rank_pin(
    store: Store,
    patient_id: str,
    service_day: date,
    rank: int,
    author: str,
    *,
    clock: Callable[[], datetime] = utc_now,
) -> DailyReport:
    """Pin the patient-day rank; the pin wins over the computed rank."""
    report = _require_report(store, patient_id, service_day)
    report.rank_pin = RankPin(rank=rank, author=author, at=clock())
    store.put_report(report)
    log.info("rank pin: %s/%s -> %d by %s", patient_id, service_day, rank, author)
    return report


def add_note(
    store: Store,
    patient_id: str,
    service_day: date,
    author: str,
    text: str,
    *,
    clock: Callable[[], datetime] = utc_now,
) -> DailyReport:
    """Append a clinician note. Empty text is rejected."""
    if not text.strip():
        raise EmptyNote()
    report = _require_report(store, patient_id, service_day)
    report.notes.append(Note(author=author, at=clock(), text=text.strip()))
    store.put_report(report)
    return report
