"""Single-file persistence for patients, sessions, and daily reports.

SQLite via the stdlib, one row per entity keyed by natural keys, documents
stored as JSON. Callers never see SQL: everything goes through this
repository, which also enforces cross-entity integrity (a report can only
reference turns that exist in its stored session).
"""
from __future__ import annotations

import json
import sqlite3
import threading
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Any, Mapping

from .engine import Phase, Session
from .pipeline import DailyReport

SCHEMA_VERSION = 1


class StoreError(Exception):
    """Base class for persistence failures."""


class StorageUnavailable(StoreError):
    pass


class SchemaMismatch(StoreError):
    def __init__(self, found: str) -> None:
        super().__init__(
            f"store schema version {found!r} does not match expected {SCHEMA_VERSION}"
        )
        self.found = found


class UnknownPatient(StoreError):
    def __init__(self, patient_id: str) -> None:
        super().__init__(f"no patient {patient_id!r}")
        self.patient_id = patient_id


class DuplicateChannelToken(StoreError):
    def __init__(self, token: str) -> None:
        super().__init__("channel token already assigned to another patient")
        self.token = token


class ReportIntegrityError(StoreError):
    """The report references turns missing from the stored session."""


@dataclass(frozen=True)
class PatientRecord:
    """One enrolled patient."""

    patient_id: str
    display_name: str
    date_of_birth: date
    demographics: str
    surgery: str
    enrolled_on: date
    channel_token: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "patient_id": self.patient_id,
            "display_name": self.display_name,
            "date_of_birth": self.date_of_birth.isoformat(),
            "demographics": self.demographics,
            "surgery": self.surgery,
            "enrolled_on": self.enrolled_on.isoformat(),
            "channel_token": self.channel_token,
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "PatientRecord":
        return cls(
            patient_id=str(raw["patient_id"]),
            display_name=str(raw["display_name"]),
            date_of_birth=date.fromisoformat(str(raw["date_of_birth"])),
            demographics=str(raw["demographics"]),
            surgery=str(raw["surgery"]),
            enrolled_on=date.fromisoformat(str(raw["enrolled_on"])),
            channel_token=str(raw["channel_token"]),
        )


_SCHEMA = """
CREATE TABLE IF NOT EXISTS meta (
    key TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS patients (
    patient_id TEXT PRIMARY KEY,
    channel_token TEXT NOT NULL UNIQUE,
    doc TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS sessions (
    patient_id TEXT NOT NULL,
    service_day TEXT NOT NULL,
    phase TEXT NOT NULL,
    doc TEXT NOT NULL,
    PRIMARY KEY (patient_id, service_day)
);
CREATE TABLE IF NOT EXISTS reports (
    patient_id TEXT NOT NULL,
    service_day TEXT NOT NULL,
    doc TEXT NOT NULL,
    PRIMARY KEY (patient_id, service_day)
);
"""


class Store:
    """Thread-safe repository over one SQLite file (":memory:" for tests)."""

    def __init__(self, path: str | Path = ":memory:") -> None:
        self._path = str(path)
        try:
            self._conn = sqlite3.connect(self._path, check_same_thread=False)
        except sqlite3.Error as exc:
            raise StorageUnavailable(f"cannot open store at {self._path}: {exc}") from exc
        self._lock = threading.RLock()
        with self._lock, self._conn:
            self._conn.executescript(_SCHEMA)
            row = self._conn.execute(
                "SELECT value FROM meta WHERE key = 'schema_version'"
            ).fetchone()
            if row is None:
                self._conn.execute(
                    "INSERT INTO meta (key, value) VALUES ('schema_version', ?)",
                    (str(SCHEMA_VERSION),),
                )
            elif row[0] != str(SCHEMA_VERSION):
                raise SchemaMismatch(row[0])

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    # -- patients --------------------------------------------------------

    def put_patient(self, record: PatientRecord) -> None:
        """Upsert by patient_id. Channel tokens stay unique across patients."""
        doc = json.dumps(record.to_dict())
        try:
            with self._lock, self._conn:
                self._conn.execute(
                    "INSERT INTO patients (patient_id, channel_token, doc)"
                    " VALUES (?, ?, ?)"
                    " ON CONFLICT(patient_id) DO UPDATE"
                    " SET channel_token = excluded.channel_token, doc = excluded.doc",
                    (record.patient_id, record.channel_token, doc),
                )
        except sqlite3.IntegrityError as exc:
            raise DuplicateChannelToken(record.channel_token) from exc
        except sqlite3.Error as exc:
            raise StorageUnavailable(str(exc)) from exc

    def get_patient(self, patient_id: str) -> PatientRecord | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT doc FROM patients WHERE patient_id = ?", (patient_id,)
            ).fetchone()
        return PatientRecord.from_dict(json.loads(row[0])) if row else None

    def get_patient_by_token(self, channel_token: str) -> PatientRecord | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT doc FROM patients WHERE channel_token = ?", (channel_token,)
            ).fetchone()
        return PatientRecord.from_dict(json.loads(row[0])) if row else None

    def all_patients(self) -> list[PatientRecord]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT doc FROM patients ORDER BY patient_id"
            ).fetchall()
        return [PatientRecord.from_dict(json.loads(row[0])) for row in rows]

    # -- sessions --------------------------------------------------------

    def put_session(self, session: Session) -> None:
        """Upsert by (patient_id, service_day). The document is round-tripped
        through its own parser first, so invalid state never reaches disk."""
        doc_dict = session.to_dict()
        Session.from_dict(doc_dict)
        try:
            with self._lock, self._conn:
                self._conn.execute(
                    "INSERT INTO sessions (patient_id, service_day, phase, doc)"
                    " VALUES (?, ?, ?, ?)"
                    " ON CONFLICT(patient_id, service_day) DO UPDATE"
                    " SET phase = excluded.phase, doc = excluded.doc",
                    (
                        session.patient_id,
                        session.service_day.isoformat(),
                        session.phase.value,
                        json.dumps(doc_dict),
                    ),
                )
        except sqlite3.Error as exc:
            raise StorageUnavailable(str(exc)) from exc

    def get_session(self, patient_id: str, service_day: date) -> Session | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT doc FROM sessions WHERE patient_id = ? AND service_day = ?",
                (patient_id, service_day.isoformat()),
            ).fetchone()
        return Session.from_dict(json.loads(row[0])) if row else None

    def open_sessions(self) -> list[Session]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT doc FROM sessions WHERE phase != ?", (Phase.CLOSED.value,)
            ).fetchall()
        return [Session.from_dict(json.loads(row[0])) for row in rows]

    def sessions_for_day(self, service_day: date) -> list[Session]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT doc FROM sessions WHERE service_day = ? ORDER BY patient_id",
                (service_day.isoformat(),),
            ).fetchall()
        return [Session.from_dict(json.loads(row[0])) for row in rows]

    # -- reports ----------------------------------------------------------

    def put_report(self, report: DailyReport) -> None:
        """Upsert by (patient_id, service_day) after verifying every log id
        the report cites resolves to a turn in the stored session."""
        session = self.get_session(report.patient_id, report.service_day)
        if session is None:
            raise ReportIntegrityError(
                f"no stored session for {report.patient_id} on {report.service_day}"
            )
        valid_ids = session.turn_ids()
        cited = set(report.extraction.all_log_ids())
        for entry in report.summaries:
            cited.update(entry.log_ids)
        dangling = cited - valid_ids
        if dangling:
            raise ReportIntegrityError(
                f"report cites turns missing from the session: {sorted(dangling)}"
            )
        doc_dict = report.to_dict()
        DailyReport.from_dict(doc_dict)
        try:
            with self._lock, self._conn:
                self._conn.execute(
                    "INSERT INTO reports (patient_id, service_day, doc)"
                    " VALUES (?, ?, ?)"
                    " ON CONFLICT(patient_id, service_day) DO UPDATE"
                    " SET doc = excluded.doc",
                    (
                        report.patient_id,
                        report.service_day.isoformat(),
                        json.dumps(doc_dict),
                    ),
                )
        except sqlite3.Error as exc:
            raise StorageUnavailable(str(exc)) from exc

    def get_report(self, patient_id: str, service_day: date) -> DailyReport | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT doc FROM reports WHERE patient_id = ? AND service_day = ?",
                (patient_id, service_day.isoformat()),
            ).fetchone()
        return DailyReport.from_dict(json.loads(row[0])) if row else None

    def report_days(self, patient_id: str) -> list[date]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT service_day FROM reports WHERE patient_id = ?"
                " ORDER BY service_day",
                (patient_id,),
            ).fetchall()
        return [date.fromisoformat(row[0]) for row in rows]

    def reports_for_day(self, service_day: date) -> list[DailyReport]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT doc FROM reports WHERE service_day = ? ORDER BY patient_id",
                (service_day.isoformat(),),
            ).fetchall()
        return [DailyReport.from_dict(json.loads(row[0])) for row in rows]

    # -- export -----------------------------------------------------------

    def export_state(self) -> dict[str, Any]:
        """Full dump of every entity, for backups and the export CLI."""
        with self._lock:
            patients = self._conn.execute("SELECT doc FROM patients ORDER BY patient_id").fetchall()
            sessions = self._conn.execute(
                "SELECT doc FROM sessions ORDER BY patient_id, service_day"
            ).fetchall()
            reports = self._conn.execute(
                "SELECT doc FROM reports ORDER BY patient_id, service_day"
            ).fetchall()
        return {
            "schema_version": SCHEMA_VERSION,
            "patients": [json.loads(row[0]) for row in patients],
            "sessions": [json.loads(row[0]) for row in sessions],
            "reports": [json.loads(row[0]) for row in reports],
        }
