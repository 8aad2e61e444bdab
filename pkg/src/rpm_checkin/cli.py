"""Operator command line: serve, simulate, replay, seed, export.

Every subcommand works fully offline with the scripted provider. Exit codes:
0 success, 1 usage error, 2 runtime error with a one-line cause on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from datetime import date, datetime, time, timedelta, timezone
from importlib import resources
from pathlib import Path
from typing import Sequence

from .config import ConfigError, Service, load_config
from .engine import ConversationEngine, EngineFallback, TickClock
from .gateway import (
    RECORD_SEPARATOR,
    GatewayError,
    ScriptedProvider,
    load_script,
    split_script,
)
from .pipeline import run_pipeline
from .protocol import ProtocolConfig, default_protocol
from .safety import ScrubRegistry
from .store import PatientRecord, Store, StoreError


class CliError(Exception):
    """Runtime failure surfaced as a one-line message and exit code 2."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; the CLI contract reserves 2 for
    # runtime failures, so remap usage problems to exit code 1.
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_day(value: str | None) -> date:
    if value is None:
        return datetime.now(timezone.utc).date()
    try:
        return date.fromisoformat(value)
    except ValueError:
        raise CliError(f"invalid day {value!r}: expected YYYY-MM-DD")


def _fixture_text(name: str) -> str:
    return resources.files("rpm_checkin.fixtures").joinpath(name).read_text("utf-8")


def _ensure_patient(store: Store, patient_id: str) -> PatientRecord:
    existing = store.get_patient(patient_id)
    if existing is not None:
        return existing
    record = PatientRecord(
        patient_id=patient_id,
        display_name=f"Demo {patient_id}",
        date_of_birth=date(1970, 1, 1),
        demographics="unspecified",
        surgery="unspecified",
        enrolled_on=datetime.now(timezone.utc).date(),
        channel_token=f"channel-{patient_id}",
    )
    store.put_patient(record)
    return record


def parse_transcript(text: str) -> list[tuple[str, str]]:
    """Parse alternating patient lines and raw agent completions.

    Format: "patient: <text>" on one line, then "agent-raw:" opening a block
    of verbatim completion lines terminated by the record separator line.
    """
    pairs: list[tuple[str, str]] = []
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        line = lines[i]
        if not line.strip():
            i += 1
            continue
        if not line.startswith("patient:"):
            raise CliError(f"transcript line {i + 1}: expected 'patient:', got {line!r}")
        patient_text = line[len("patient:") :].strip()
        i += 1
        if i >= len(lines) or lines[i].strip() != "agent-raw:":
            raise CliError(f"transcript line {i + 1}: expected 'agent-raw:' block")
        i += 1
        block: list[str] = []
        while i < len(lines) and lines[i].strip() != RECORD_SEPARATOR:
            block.append(lines[i])
            i += 1
        if i >= len(lines):
            raise CliError("transcript ended inside an agent-raw block (missing separator)")
        i += 1
        pairs.append((patient_text, "\n".join(block)))
    if not pairs:
        raise CliError("transcript contains no exchanges")
    return pairs


def _report_document(service_day: date, store: Store, patient_id: str, protocol: ProtocolConfig) -> dict:
    report = store.get_report(patient_id, service_day)
    if report is None:
        raise CliError(f"no report produced for {patient_id} on {service_day.isoformat()}")
    document = report.to_dict()
    document["display"] = report.display(protocol)
    document["rank"] = report.rank(protocol)
    return document


def cmd_serve(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        raise CliError(str(exc))
    service = Service(config)
    from .api import create_app

    app = create_app(service)
    import uvicorn

    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    service_day = _parse_day(args.day)
    store = Store(args.store)
    protocol = default_protocol()
    if args.scripted:
        provider = ScriptedProvider.from_file(args.scripted)
    elif args.config:
        config = load_config(args.config)
        service = Service(config, store=store)
        provider = service.provider
    else:
        raise CliError("simulate needs --scripted FILE or --config FILE")

    patient = _ensure_patient(store, args.patient)
    registry = ScrubRegistry.build([(patient.display_name, patient.date_of_birth)])
    engine = ConversationEngine(protocol, provider, store, scrub_registry=registry)
    session = engine.resume_or_start(patient.patient_id, service_day)

    interactive = sys.stdin.isatty()
    if interactive:
        print(f"Check-in for {patient.patient_id} on {service_day.isoformat()}.")
        print("Type patient messages; Ctrl-D ends the session.")
    while True:
        if interactive:
            sys.stdout.write("patient> ")
            sys.stdout.flush()
        line = sys.stdin.readline()
        if not line:
            break
        text = line.strip()
        if not text:
            continue
        try:
            reply = engine.handle_patient_utterance(session, text)
        except EngineFallback as exc:
            print(f"agent> {exc.fallback_reply}  [degraded: {exc}]")
            continue
        print(f"agent> {reply}")
        if session.checklist.is_complete:
            print("(all 13 questions discussed)")
    try:
        engine.close_session(session)
    except GatewayError:
        pass
    print(f"session {session.session_id} closed in phase {session.phase.value}")
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    service_day = _parse_day(args.day)
    try:
        transcript = Path(args.transcript).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read transcript {args.transcript}: {exc}")
    pairs = parse_transcript(transcript)
    try:
        analysis = load_script(args.scripted)
    except OSError as exc:
        raise CliError(f"cannot read scripted fixture {args.scripted}: {exc}")

    store = Store(args.store)
    protocol = default_protocol()
    clock = TickClock(
        datetime.combine(service_day, time(8, 0), tzinfo=timezone.utc),
        step=timedelta(seconds=30),
    )
    patient = _ensure_patient(store, args.patient)
    conversation = ScriptedProvider([raw for _, raw in pairs])
    engine = ConversationEngine(protocol, conversation, store, clock=clock)
    session = engine.start_session(patient.patient_id, service_day)
    for patient_text, _ in pairs:
        try:
            engine.handle_patient_utterance(session, patient_text)
        except EngineFallback as exc:
            raise CliError(f"replay failed mid-conversation: {exc}")

    engine.close_session(session)
    analysis_provider = ScriptedProvider(analysis)
    try:
        run_pipeline(
            session, analysis_provider, protocol, store, clock=clock
        )
    except GatewayError as exc:
        raise CliError(f"analysis failed: {exc}")
    document = _report_document(service_day, store, patient.patient_id, protocol)
    print(json.dumps(document, indent=2, sort_keys=True))
    return 0


def cmd_seed(args: argparse.Namespace) -> int:
    service_day = _parse_day(args.day)
    store = Store(args.store)
    patients = json.loads(_fixture_text("demo_patients.json"))
    for raw in patients:
        store.put_patient(PatientRecord.from_dict(raw))

    # Run the bundled day-one conversation end-to-end for the first patient
    # so a fresh deployment has a full session and report to look at.
    first = PatientRecord.from_dict(patients[0])
    pairs = parse_transcript(_fixture_text("day1_transcript.txt"))
    completions = [raw for _, raw in pairs] + split_script(
        _fixture_text("day1_analysis.txt")
    )
    provider = ScriptedProvider(completions)
    protocol = default_protocol()
    clock = TickClock(
        datetime.combine(service_day, time(9, 0), tzinfo=timezone.utc),
        step=timedelta(seconds=45),
    )
    registry = ScrubRegistry.build(
        (p["display_name"], date.fromisoformat(p["date_of_birth"])) for p in patients
    )
    engine = ConversationEngine(
        protocol, provider, store, scrub_registry=registry, clock=clock
    )
    engine.on_close.append(
        lambda s: run_pipeline(
            s, provider, protocol, store, registry=registry, clock=clock
        )
    )
    existing = store.get_session(first.patient_id, service_day)
    if existing is None:
        session = engine.start_session(first.patient_id, service_day)
        for patient_text, _ in pairs:
            engine.handle_patient_utterance(session, patient_text)
        engine.close_session(session)
    print(
        f"seeded {len(patients)} patients; session and report for"
        f" {first.patient_id} on {service_day.isoformat()}"
    )
    return 0


def cmd_export(args: argparse.Namespace) -> int:
    service_day = _parse_day(args.day)
    store = Store(args.store)
    protocol = default_protocol()
    reports = store.reports_for_day(service_day)
    documents = []
    for report in reports:
        document = report.to_dict()
        document["display"] = report.display(protocol)
        document["rank"] = report.rank(protocol)
        documents.append(document)
    print(
        json.dumps(
            {"day": service_day.isoformat(), "reports": documents},
            indent=2,
            sort_keys=True,
        )
    )
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="rpm-checkin", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--config", required=True, help="path to the TOML config file")
    serve.set_defaults(func=cmd_serve)

    simulate = sub.add_parser("simulate", help="interactive check-in dialogue")
    simulate.add_argument("--patient", required=True)
    simulate.add_argument("--day", default=None, help="service day (YYYY-MM-DD)")
    simulate.add_argument("--scripted", default=None, help="scripted completion fixture")
    simulate.add_argument("--config", default=None, help="TOML config for a live provider")
    simulate.add_argument("--store", default=":memory:", help="store path")
    simulate.set_defaults(func=cmd_simulate)

    replay = sub.add_parser("replay", help="replay a transcript through the pipeline")
    replay.add_argument("--transcript", required=True, help="patient/agent-raw transcript file")
    replay.add_argument("--scripted", required=True, help="analysis completion fixture")
    replay.add_argument("--patient", default="replay-patient")
    replay.add_argument("--day", default="2026-01-01", help="service day (YYYY-MM-DD)")
    replay.add_argument("--store", default=":memory:", help="store path")
    replay.set_defaults(func=cmd_replay)

    seed = sub.add_parser("seed", help="load demo patients and the bundled day-one session")
    seed.add_argument("--store", required=True, help="store path")
    seed.add_argument("--day", default=None, help="service day (YYYY-MM-DD)")
    seed.set_defaults(func=cmd_seed)

    export = sub.add_parser("export", help="dump a day's reports as JSON")
    export.add_argument("--store", required=True, help="store path")
    export.add_argument("--day", default=None, help="service day (YYYY-MM-DD)")
    export.set_defaults(func=cmd_export)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, StoreError, GatewayError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
