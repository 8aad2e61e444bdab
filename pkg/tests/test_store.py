from __future__ import annotations

import sqlite3
from datetime import date, datetime, timedelta, timezone

import pytest

from rpm_checkin.engine import Phase, Session, Turn
from rpm_checkin.pipeline import DailyReport, ExtractionResult, SummaryEntry
from rpm_checkin.protocol import QuestionKey
from rpm_checkin.store import (
    DuplicateChannelToken,
    PatientRecord,
    ReportIntegrityError,
    SchemaMismatch,
    Store,
)
from rpm_checkin.wire import Checklist, CoverageStatus

from conftest import SERVICE_DAY

NOW = datetime(2026, 8, 14, 12, 0, tzinfo=timezone.utc)


def make_patient(pid: str, token: str | None = None) -> PatientRecord:
    return PatientRecord(
        patient_id=pid,
        display_name=f"Demo {pid}",
        date_of_birth=date(1970, 1, 1),
        demographics="70M",
        surgery="appendectomy, 5 days post-op",
        enrolled_on=date(2026, 8, 1),
        channel_token=token or f"channel-{pid}",
    )


def make_session(pid: str = "p001", n_turns: int = 4) -> Session:
    session = Session(
        session_id=f"{pid}:{SERVICE_DAY}",
        patient_id=pid,
        service_day=SERVICE_DAY,
        created_at=NOW,
    )
    for i in range(1, n_turns + 1):
        session.turns.append(
            Turn(
                turn_id=i,
                role="patient" if i % 2 else "agent",
                text=f"turn {i}",
                at=NOW + timedelta(seconds=i),
            )
        )
    session.checklist = session.checklist.replace(
        QuestionKey.PAIN, CoverageStatus.IN_DISCUSSION
    )
    return session


class TestPatients:
    def test_round_trip(self, store):
        record = make_patient("p001")
        store.put_patient(record)
        assert store.get_patient("p001") == record
        assert store.get_patient("missing") is None

    def test_upsert_replaces(self, store):
        store.put_patient(make_patient("p001"))
        updated = make_patient("p001", token="channel-p001-rotated")
        store.put_patient(updated)
        assert store.get_patient("p001").channel_token == "channel-p001-rotated"
        assert len(store.all_patients()) == 1

    def test_lookup_by_token(self, store):
        store.put_patient(make_patient("p001"))
        assert store.get_patient_by_token("channel-p001").patient_id == "p001"
        assert store.get_patient_by_token("nope") is None

    def test_channel_token_unique(self, store):
        store.put_patient(make_patient("p001", token="shared"))
        with pytest.raises(DuplicateChannelToken):
            store.put_patient(make_patient("p002", token="shared"))

    def test_all_patients_sorted(self, store):
        for pid in ("p003", "p001", "p002"):
            store.put_patient(make_patient(pid))
        assert [p.patient_id for p in store.all_patients()] == ["p001", "p002", "p003"]


class TestSessions:
    def test_round_trip_preserves_everything(self, store):
        session = make_session()
        store.put_session(session)
        loaded = store.get_session("p001", SERVICE_DAY)
        assert loaded.to_dict() == session.to_dict()
        assert loaded.checklist[QuestionKey.PAIN] is CoverageStatus.IN_DISCUSSION
        assert loaded.turns[0].at.tzinfo is not None

    def test_upsert_by_patient_day(self, store):
        session = make_session()
        store.put_session(session)
        session.phase = Phase.CLOSED
        store.put_session(session)
        assert store.get_session("p001", SERVICE_DAY).phase is Phase.CLOSED
        assert store.sessions_for_day(SERVICE_DAY)[0].phase is Phase.CLOSED
        assert len(store.sessions_for_day(SERVICE_DAY)) == 1

    def test_open_sessions_excludes_closed(self, store):
        open_session = make_session("p001")
        store.put_session(open_session)
        closed_session = make_session("p002")
        closed_session.session_id = "p002:2026-08-14"
        closed_session.phase = Phase.CLOSED
        store.put_session(closed_session)
        assert [s.patient_id for s in store.open_sessions()] == ["p001"]

    def test_sessions_for_day_filters(self, store):
        store.put_session(make_session("p001"))
        other_day = make_session("p001")
        other_day.service_day = SERVICE_DAY + timedelta(days=1)
        store.put_session(other_day)
        assert len(store.sessions_for_day(SERVICE_DAY)) == 1


def make_report(pid: str = "p001", log_ids=(), summary_ids=None) -> DailyReport:
    extraction = ExtractionResult.empty()
    if log_ids:
        from rpm_checkin.pipeline import SymptomFinding

        findings = [
            f if f.key is not QuestionKey.PAIN else SymptomFinding(
                key=QuestionKey.PAIN, state=2, scale=5, log_ids=tuple(log_ids)
            )
            for f in extraction.findings
        ]
        extraction = ExtractionResult(findings=tuple(findings))
    report = DailyReport(
        patient_id=pid,
        service_day=SERVICE_DAY,
        extraction=extraction,
        generated_at=NOW,
    )
    if summary_ids is not None:
        report.summaries.append(
            SummaryEntry(category="Summary", log_ids=tuple(summary_ids), content="s")
        )
    return report


class TestReports:
    def test_round_trip(self, store):
        store.put_session(make_session())
        report = make_report(log_ids=(1, 2), summary_ids=(1, 2))
        store.put_report(report)
        loaded = store.get_report("p001", SERVICE_DAY)
        assert loaded.to_dict() == report.to_dict()
        assert store.get_report("p001", SERVICE_DAY + timedelta(days=1)) is None

    def test_requires_stored_session(self, store):
        with pytest.raises(ReportIntegrityError):
            store.put_report(make_report())

    def test_rejects_dangling_extraction_ids(self, store):
        store.put_session(make_session(n_turns=2))
        with pytest.raises(ReportIntegrityError) as excinfo:
            store.put_report(make_report(log_ids=(1, 9)))
        assert "9" in str(excinfo.value)

    def test_rejects_dangling_summary_ids(self, store):
        store.put_session(make_session(n_turns=2))
        with pytest.raises(ReportIntegrityError):
            store.put_report(make_report(summary_ids=(1, 7)))

    def test_upsert_replaces(self, store):
        store.put_session(make_session())
        store.put_report(make_report())
        replacement = make_report()
        replacement.needs_review = True
        store.put_report(replacement)
        assert store.get_report("p001", SERVICE_DAY).needs_review
        assert len(store.reports_for_day(SERVICE_DAY)) == 1

    def test_report_days_sorted(self, store):
        for offset in (2, 0, 1):
            day = SERVICE_DAY + timedelta(days=offset)
            session = make_session()
            session.service_day = day
            store.put_session(session)
            report = make_report()
            report.service_day = day
            store.put_report(report)
        assert store.report_days("p001") == [
            SERVICE_DAY,
            SERVICE_DAY + timedelta(days=1),
            SERVICE_DAY + timedelta(days=2),
        ]
        assert store.report_days("missing") == []


class TestDurabilityAndSchema:
    def test_reopen_preserves_data(self, tmp_path):
        path = tmp_path / "service.db"
        store = Store(path)
        store.put_patient(make_patient("p001"))
        store.put_session(make_session())
        store.put_report(make_report(log_ids=(1, 2)))
        store.close()

        reopened = Store(path)
        assert reopened.get_patient("p001").display_name == "Demo p001"
        assert reopened.get_session("p001", SERVICE_DAY) is not None
        assert reopened.get_report("p001", SERVICE_DAY).rank_pin is None
        reopened.close()

    def test_schema_mismatch_rejected(self, tmp_path):
        path = tmp_path / "service.db"
        Store(path).close()
        conn = sqlite3.connect(path)
        with conn:
            conn.execute("UPDATE meta SET value = '999' WHERE key = 'schema_version'")
        conn.close()
        with pytest.raises(SchemaMismatch):
            Store(path)

    def test_export_state_shape(self, store):
        store.put_patient(make_patient("p001"))
        store.put_session(make_session())
        store.put_report(make_report())
        dump = store.export_state()
        assert dump["schema_version"] == 1
        assert [p["patient_id"] for p in dump["patients"]] == ["p001"]
        assert len(dump["sessions"]) == 1
        assert len(dump["reports"]) == 1
