from __future__ import annotations

import json
from datetime import date, datetime, time, timedelta, timezone
from importlib import resources

import pytest

from rpm_checkin.cli import parse_transcript
from rpm_checkin.engine import ConversationEngine, TickClock
from rpm_checkin.gateway import ScriptedProvider, split_script
from rpm_checkin.protocol import default_protocol
from rpm_checkin.store import PatientRecord, Store

SERVICE_DAY = date(2026, 8, 14)

# One "[ACCEPTANCE] <criterion>: PASS|FAIL" line per acceptance test, echoed
# in the terminal summary so the gate outcome is visible in any pytest run.
ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)


def fixture_text(name: str) -> str:
    return resources.files("rpm_checkin.fixtures").joinpath(name).read_text("utf-8")


@pytest.fixture(scope="session")
def protocol():
    return default_protocol()


@pytest.fixture()
def store():
    return Store(":memory:")


@pytest.fixture(scope="session")
def day1_pairs():
    """(patient utterance, raw completion) pairs of the bundled conversation."""
    return parse_transcript(fixture_text("day1_transcript.txt"))


@pytest.fixture(scope="session")
def day1_analysis():
    """[extraction completion, summary completion] for the bundled conversation."""
    return split_script(fixture_text("day1_analysis.txt"))


@pytest.fixture(scope="session")
def demo_patients():
    return [
        PatientRecord.from_dict(raw)
        for raw in json.loads(fixture_text("demo_patients.json"))
    ]


def make_clock() -> TickClock:
    return TickClock(
        datetime.combine(SERVICE_DAY, time(9, 0), tzinfo=timezone.utc),
        step=timedelta(seconds=30),
    )


def run_day1_session(protocol, store, day1_pairs, patient_id: str = "p001"):
    """Drive the bundled conversation to completion; returns the session."""
    provider = ScriptedProvider([raw for _, raw in day1_pairs])
    engine = ConversationEngine(protocol, provider, store, clock=make_clock())
    session = engine.resume_or_start(patient_id, SERVICE_DAY)
    for text, _ in day1_pairs:
        engine.handle_patient_utterance(session, text)
    return engine, session
