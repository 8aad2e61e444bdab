"""Offline demo: replay the bundled day through the full service and print
the clinician's view.

Seeds 20 demo patients into a throwaway store, drives the recorded
day-one conversation for p001 through the engine with the scripted
provider, closes the session (which runs extraction + summarization),
then prints the triage list and the p001 report. No network, no
credentials.
"""
from __future__ import annotations

import json
from datetime import date
from importlib import resources

from rpm_checkin.cli import parse_transcript
from rpm_checkin.engine import ConversationEngine
from rpm_checkin.gateway import ScriptedProvider, split_script
from rpm_checkin.pipeline import run_pipeline
from rpm_checkin.protocol import default_protocol
from rpm_checkin.store import PatientRecord, Store
from rpm_checkin.triage import overview_for, sort_key

FIXTURES = resources.files("rpm_checkin.fixtures")
DAY = date(2026, 8, 14)


def main() -> None:
    protocol = default_protocol()
    store = Store(":memory:")
    for raw in json.loads((FIXTURES / "demo_patients.json").read_text()):
        store.put_patient(PatientRecord.from_dict(raw))

    pairs = parse_transcript((FIXTURES / "day1_transcript.txt").read_text())
    provider = ScriptedProvider([raw for _, raw in pairs])
    engine = ConversationEngine(protocol, provider, store)
    session = engine.start_session("p001", DAY)
    for utterance, _ in pairs:
        engine.handle_patient_utterance(session, utterance)
    engine.close_session(session)

    analysis = ScriptedProvider(
        split_script((FIXTURES / "day1_analysis.txt").read_text())
    )
    report = run_pipeline(session, analysis, protocol, store)

    rows = sorted(
        (
            overview_for(p, store.get_report(p.patient_id, DAY), protocol)
            for p in store.all_patients()
        ),
        key=sort_key,
    )
    print("triage list:")
    for row in rows:
        marker = row.dot_color if row.has_report else "silent"
        print(f"  {row.patient_id}  {row.display_name:<18} {marker}")

    print()
    print(f"p001 report (rank {report.rank(protocol)}):")
    print(json.dumps(report.display(protocol), indent=2))
    for entry in report.summaries:
        print(f"summary {list(entry.log_ids)}: {entry.content}")


if __name__ == "__main__":
    main()
