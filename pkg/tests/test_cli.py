from __future__ import annotations

import io
import json
import shutil
import subprocess
import sys
from importlib import resources

import pytest

from rpm_checkin.cli import CliError, main, parse_transcript
from rpm_checkin.gateway import RECORD_SEPARATOR
from rpm_checkin.store import Store

from conftest import SERVICE_DAY

DAY = SERVICE_DAY.isoformat()


def fixture_path(name: str) -> str:
    return str(resources.files("rpm_checkin.fixtures") / name)


def run_replay(capsys, **extra) -> str:
    argv = [
        "replay",
        "--transcript", fixture_path("day1_transcript.txt"),
        "--scripted", fixture_path("day1_analysis.txt"),
        "--patient", "p001",
        "--day", DAY,
    ]
    for flag, value in extra.items():
        argv += [f"--{flag}", value]
    code = main(argv)
    out = capsys.readouterr().out
    assert code == 0
    return out


class TestReplay:
    def test_report_values(self, capsys):
        document = json.loads(run_replay(capsys))
        assert document["rank"] == 4
        assert document["needs_review"] is False
        display = document["display"]
        assert display["pain"]["color"] == "red" and display["pain"]["scale"] == 8
        assert display["eating"]["color"] == "yellow"
        assert display["constipation"]["scale"] == 6
        denied = [k for k, slot in display.items() if slot["state"] == 1]
        assert len(denied) == 10
        assert document["summaries"][0]["log_ids"] == [5, 13, 15, 29, 31]

    def test_byte_identical_across_runs(self, capsys):
        assert run_replay(capsys) == run_replay(capsys)

    def test_missing_transcript(self, capsys):
        code = main(
            [
                "replay",
                "--transcript", "/nonexistent/transcript.txt",
                "--scripted", fixture_path("day1_analysis.txt"),
            ]
        )
        assert code == 2
        assert "/nonexistent/transcript.txt" in capsys.readouterr().err

    def test_invalid_day(self, capsys):
        code = main(
            [
                "replay",
                "--transcript", fixture_path("day1_transcript.txt"),
                "--scripted", fixture_path("day1_analysis.txt"),
                "--day", "tomorrow",
            ]
        )
        assert code == 2
        assert "tomorrow" in capsys.readouterr().err


class TestUsageErrors:
    def test_no_subcommand(self, capsys):
        assert main([]) == 1
        assert "usage" in capsys.readouterr().err

    def test_unknown_subcommand(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_missing_required_flag(self, capsys):
        assert main(["replay", "--scripted", "x"]) == 1
        assert "--transcript" in capsys.readouterr().err

    def test_installed_script_usage_exit(self):
        exe = shutil.which("rpm-checkin")
        assert exe, "console script not installed"
        proc = subprocess.run([exe], capture_output=True, text=True)
        assert proc.returncode == 1


class TestServe:
    def test_missing_config_names_path(self, capsys):
        code = main(["serve", "--config", "/nonexistent/service.toml"])
        assert code == 2
        assert "/nonexistent/service.toml" in capsys.readouterr().err

    def test_invalid_config(self, tmp_path, capsys):
        config = tmp_path / "service.toml"
        config.write_text("provider.mode = >>> not toml <<<")
        assert main(["serve", "--config", str(config)]) == 2
        assert "TOML" in capsys.readouterr().err


class TestSeedAndExport:
    def test_seed_then_export(self, tmp_path, capsys):
        db = tmp_path / "service.db"
        assert main(["seed", "--store", str(db), "--day", DAY]) == 0
        out = capsys.readouterr().out
        assert "seeded 20 patients" in out

        store = Store(db)
        assert len(store.all_patients()) == 20
        assert store.get_report("p001", SERVICE_DAY) is not None
        store.close()

        assert main(["export", "--store", str(db), "--day", DAY]) == 0
        document = json.loads(capsys.readouterr().out)
        assert document["day"] == DAY
        assert [r["patient_id"] for r in document["reports"]] == ["p001"]
        assert document["reports"][0]["rank"] == 4

    def test_seed_is_idempotent(self, tmp_path, capsys):
        db = tmp_path / "service.db"
        assert main(["seed", "--store", str(db), "--day", DAY]) == 0
        assert main(["seed", "--store", str(db), "--day", DAY]) == 0
        capsys.readouterr()
        assert main(["export", "--store", str(db), "--day", DAY]) == 0
        document = json.loads(capsys.readouterr().out)
        assert len(document["reports"]) == 1

    def test_export_empty_day(self, tmp_path, capsys):
        db = tmp_path / "service.db"
        Store(db).close()
        assert main(["export", "--store", str(db), "--day", "2030-01-01"]) == 0
        document = json.loads(capsys.readouterr().out)
        assert document == {"day": "2030-01-01", "reports": []}


class TestSimulate:
    def test_scripted_dialogue(self, capsys, monkeypatch, day1_pairs):
        script = fixture_path("day1_conversation.txt")
        monkeypatch.setattr(sys, "stdin", io.StringIO("ready to start\n"))
        code = main(
            [
                "simulate",
                "--patient", "demo",
                "--day", DAY,
                "--scripted", script,
            ]
        )
        out = capsys.readouterr().out
        assert code == 0
        assert "agent> " in out
        assert "closed in phase" in out

    def test_degraded_exchange_keeps_going(self, capsys, monkeypatch, tmp_path):
        empty = tmp_path / "empty.txt"
        empty.write_text("")
        monkeypatch.setattr(sys, "stdin", io.StringIO("hello\n"))
        code = main(
            ["simulate", "--patient", "demo", "--day", DAY, "--scripted", str(empty)]
        )
        out = capsys.readouterr().out
        assert code == 0
        assert "[degraded:" in out

    def test_needs_provider_source(self, capsys):
        # Fails before any stdin read: no provider source given.
        code = main(["simulate", "--patient", "demo", "--day", DAY])
        assert code == 2
        assert "--scripted" in capsys.readouterr().err


class TestTranscriptParsing:
    def test_round_trip_fixture(self, day1_pairs):
        assert len(day1_pairs) == 20
        assert all(text and raw for text, raw in day1_pairs)

    def test_wrong_lead_line(self):
        with pytest.raises(CliError) as excinfo:
            parse_transcript("agent: hi\n")
        assert "line 1" in str(excinfo.value)

    def test_missing_block_header(self):
        with pytest.raises(CliError) as excinfo:
            parse_transcript("patient: hi\npatient: again\n")
        assert "agent-raw" in str(excinfo.value)

    def test_unterminated_block(self):
        text = "patient: hi\nagent-raw:\nsome reply line\n"
        with pytest.raises(CliError) as excinfo:
            parse_transcript(text)
        assert "separator" in str(excinfo.value)

    def test_empty_transcript(self):
        with pytest.raises(CliError):
            parse_transcript("\n\n")

    def test_minimal_valid(self):
        text = (
            "patient: hello\n"
            "agent-raw:\n"
            "line one\n"
            "line two\n"
            f"{RECORD_SEPARATOR}\n"
        )
        assert parse_transcript(text) == [("hello", "line one\nline two")]
