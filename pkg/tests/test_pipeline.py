from __future__ import annotations

import json
from datetime import datetime, timezone

import pytest

from rpm_checkin.engine import Session, Turn
from rpm_checkin.gateway import ScriptExhausted, ScriptedProvider
from rpm_checkin.pipeline import (
    BadCategory,
    BadEnvelope,
    BadScale,
    BadState,
    DanglingLogId,
    ExtractionResult,
    ForeignLogIds,
    InsufficientLogs,
    MissingSymptomKey,
    Note,
    NotJson,
    RankPin,
    SeverityOverride,
    SymptomFinding,
    UnknownSymptomKey,
    compute_patient_severity,
    render_conversation_log,
    render_extraction_prompt,
    render_summarization_prompt,
    render_symptom_status,
    run_extraction,
    run_pipeline,
    run_summarization,
    strip_code_fence,
    validate_extraction,
    validate_summaries,
)
from rpm_checkin.protocol import KEY_ORDER, QuestionKey, SeverityClass

from conftest import SERVICE_DAY, make_clock, run_day1_session

NOW = datetime(2026, 8, 14, 12, 0, tzinfo=timezone.utc)


def make_session(n_turns: int = 8) -> Session:
    session = Session(
        session_id="p900:2026-08-14",
        patient_id="p900",
        service_day=SERVICE_DAY,
        created_at=NOW,
    )
    for i in range(1, n_turns + 1):
        role = "patient" if i % 2 else "agent"
        session.turns.append(Turn(turn_id=i, role=role, text=f"turn {i}", at=NOW))
    return session


def extraction_json(**entries) -> str:
    doc = {key.value: {"logs": [], "state": 0} for key in KEY_ORDER}
    doc.update(entries)
    return json.dumps(doc)


@pytest.fixture()
def day1_session(protocol, store, day1_pairs):
    _, session = run_day1_session(protocol, store, day1_pairs)
    return session


class TestStripCodeFence:
    def test_plain_text_untouched(self):
        assert strip_code_fence('{"a": 1}') == '{"a": 1}'

    def test_fence_removed(self):
        assert strip_code_fence('```json\n{"a": 1}\n```') == '{"a": 1}'

    def test_unclosed_fence_left_alone(self):
        assert strip_code_fence('```json\n{"a": 1}').startswith("```")


class TestValidateExtraction:
    def test_all_quiet(self, protocol):
        session = make_session()
        result = validate_extraction(extraction_json(), session, protocol)
        assert all(f.state == 0 and f.log_ids == () for f in result.findings)

    def test_reported_symptom_with_scale(self, protocol):
        session = make_session()
        raw = extraction_json(pain={"logs": [1, 2], "state": 2, "scale": 7})
        result = validate_extraction(raw, session, protocol)
        finding = result.finding(QuestionKey.PAIN)
        assert (finding.state, finding.scale, finding.log_ids) == (2, 7, (1, 2))

    def test_fenced_json_accepted(self, protocol):
        session = make_session()
        raw = "```json\n" + extraction_json() + "\n```"
        assert validate_extraction(raw, session, protocol)

    def test_prose_rejected(self, protocol):
        with pytest.raises(NotJson):
            validate_extraction("The patient is fine.", make_session(), protocol)

    def test_json_array_rejected(self, protocol):
        with pytest.raises(NotJson):
            validate_extraction("[1, 2]", make_session(), protocol)

    def test_unknown_key(self, protocol):
        doc = json.loads(extraction_json())
        doc["headache"] = {"logs": [], "state": 0}
        with pytest.raises(UnknownSymptomKey):
            validate_extraction(json.dumps(doc), make_session(), protocol)

    def test_missing_key(self, protocol):
        doc = json.loads(extraction_json())
        del doc["mood"]
        with pytest.raises(MissingSymptomKey):
            validate_extraction(json.dumps(doc), make_session(), protocol)

    @pytest.mark.parametrize("state", [3, -1, "2", True, None, 1.0])
    def test_bad_states(self, protocol, state):
        raw = extraction_json(fever={"logs": [1, 2], "state": state})
        with pytest.raises(BadState):
            validate_extraction(raw, make_session(), protocol)

    def test_entry_not_object(self, protocol):
        raw = extraction_json(fever=2)
        with pytest.raises(BadState):
            validate_extraction(raw, make_session(), protocol)

    def test_dangling_log_id(self, protocol):
        raw = extraction_json(fever={"logs": [1, 99], "state": 1})
        with pytest.raises(DanglingLogId) as excinfo:
            validate_extraction(raw, make_session(), protocol)
        assert excinfo.value.value == 99

    def test_non_integer_log_id(self, protocol):
        raw = extraction_json(fever={"logs": [1, 2.5], "state": 1})
        with pytest.raises(DanglingLogId):
            validate_extraction(raw, make_session(), protocol)

    def test_logs_not_a_list(self, protocol):
        raw = extraction_json(fever={"logs": "1,2", "state": 1})
        with pytest.raises(DanglingLogId):
            validate_extraction(raw, make_session(), protocol)

    def test_scale_on_non_rating_key(self, protocol):
        raw = extraction_json(fever={"logs": [1, 2], "state": 1, "scale": 0})
        with pytest.raises(BadScale):
            validate_extraction(raw, make_session(), protocol)

    def test_missing_scale_when_reported(self, protocol):
        raw = extraction_json(pain={"logs": [1, 2], "state": 2})
        with pytest.raises(BadScale):
            validate_extraction(raw, make_session(), protocol)

    @pytest.mark.parametrize("scale", [0, 11, -1, "8", None])
    def test_bad_scale_when_reported(self, protocol, scale):
        raw = extraction_json(pain={"logs": [1, 2], "state": 2, "scale": scale})
        with pytest.raises(BadScale):
            validate_extraction(raw, make_session(), protocol)

    def test_nonzero_scale_when_denied(self, protocol):
        raw = extraction_json(pain={"logs": [1, 2], "state": 1, "scale": 4})
        with pytest.raises(BadScale):
            validate_extraction(raw, make_session(), protocol)

    def test_zero_scale_when_denied_ok(self, protocol):
        raw = extraction_json(pain={"logs": [1, 2], "state": 1, "scale": 0})
        finding = validate_extraction(raw, make_session(), protocol).finding(
            QuestionKey.PAIN
        )
        assert finding.state == 1 and finding.scale == 0

    def test_discussed_needs_two_logs(self, protocol):
        raw = extraction_json(fever={"logs": [1], "state": 1})
        with pytest.raises(InsufficientLogs):
            validate_extraction(raw, make_session(), protocol)


class TestFindingInvariants:
    def test_round_trip(self):
        finding = SymptomFinding(
            key=QuestionKey.PAIN, state=2, scale=8, log_ids=(5, 6)
        )
        assert SymptomFinding.from_dict(finding.to_dict()) == finding

    def test_scale_requires_reported(self):
        with pytest.raises(BadScale):
            SymptomFinding(key=QuestionKey.PAIN, state=1, scale=5, log_ids=(1, 2))

    def test_discussed_requires_two_logs(self):
        with pytest.raises(InsufficientLogs):
            SymptomFinding(key=QuestionKey.PAIN, state=1, scale=None, log_ids=(1,))

    def test_extraction_totality(self):
        with pytest.raises(MissingSymptomKey):
            ExtractionResult(
                findings=(
                    SymptomFinding(
                        key=QuestionKey.PAIN, state=0, scale=None, log_ids=()
                    ),
                )
            )

    def test_extraction_round_trip(self):
        result = ExtractionResult.empty()
        assert ExtractionResult.from_dict(result.to_dict()) == result


class TestValidateSummaries:
    def summary_json(self, ids='"[1, 2]"', category='"Summary"', content='"ok"'):
        return (
            '{"result": [{"category": %s, "conversation_log_ids": %s,'
            ' "content": %s}]}' % (category, ids, content)
        )

    def test_string_id_array(self):
        entries = validate_summaries(self.summary_json(), make_session())
        assert entries[0].log_ids == (1, 2)
        assert entries[0].category == "Summary"

    def test_real_id_array_accepted(self):
        entries = validate_summaries(self.summary_json(ids="[1, 2]"), make_session())
        assert entries[0].log_ids == (1, 2)

    def test_empty_result_list(self):
        assert validate_summaries('{"result": []}', make_session()) == []

    def test_missing_result(self):
        with pytest.raises(BadEnvelope):
            validate_summaries('{"summaries": []}', make_session())

    def test_result_not_list(self):
        with pytest.raises(BadEnvelope):
            validate_summaries('{"result": {}}', make_session())

    def test_entry_not_object(self):
        with pytest.raises(BadEnvelope):
            validate_summaries('{"result": ["hi"]}', make_session())

    def test_wrong_category(self):
        with pytest.raises(BadCategory):
            validate_summaries(
                self.summary_json(category='"Recap"'), make_session()
            )

    def test_empty_content(self):
        with pytest.raises(BadEnvelope):
            validate_summaries(self.summary_json(content='"  "'), make_session())

    def test_garbled_id_string(self):
        with pytest.raises(BadEnvelope):
            validate_summaries(self.summary_json(ids='"1 and 2"'), make_session())

    def test_dangling_log_id(self):
        with pytest.raises(DanglingLogId):
            validate_summaries(self.summary_json(ids='"[1, 99]"'), make_session())

    def test_foreign_ids_against_extraction(self, protocol):
        session = make_session()
        extraction = validate_extraction(
            extraction_json(pain={"logs": [1, 2], "state": 2, "scale": 5}),
            session,
            protocol,
        )
        with pytest.raises(ForeignLogIds) as excinfo:
            validate_summaries(self.summary_json(ids='"[1, 3]"'), session, extraction)
        assert excinfo.value.ids == (3,)

    def test_ids_within_reported_symptoms_pass(self, protocol):
        session = make_session()
        extraction = validate_extraction(
            extraction_json(pain={"logs": [1, 2], "state": 2, "scale": 5}),
            session,
            protocol,
        )
        entries = validate_summaries(self.summary_json(ids='"[1, 2]"'), session, extraction)
        assert entries[0].log_ids == (1, 2)


class TestPrompts:
    def test_conversation_log_numbers_turns(self):
        session = make_session(3)
        log_text = render_conversation_log(session)
        assert log_text.splitlines() == [
            "[1] user: turn 1",
            "[2] assistant: turn 2",
            "[3] user: turn 3",
        ]

    def test_conversation_log_collapses_newlines(self):
        session = make_session(1)
        session.turns[0].text = "two\nlines  here"
        assert render_conversation_log(session) == "[1] user: two lines here"

    def test_extraction_prompt_lists_all_keys(self, protocol):
        prompt = render_extraction_prompt(protocol)
        for key in KEY_ORDER:
            assert f"- {key.value}:" in prompt
        assert "likert: true" in prompt and "likert: false" in prompt
        assert "echo 0" in prompt
        assert "AT LEAST TWO MESSAGES" in prompt
        assert "DO NOT ENCLOSE IT IN ```" in prompt

    def test_summarization_prompt_names_reported_symptoms(self, protocol):
        extraction = ExtractionResult(
            findings=tuple(
                SymptomFinding(
                    key=key,
                    state=2 if key is QuestionKey.PAIN else 0,
                    scale=8 if key is QuestionKey.PAIN else None,
                    log_ids=(1, 2) if key is QuestionKey.PAIN else (),
                )
                for key in KEY_ORDER
            )
        )
        prompt = render_summarization_prompt(protocol, extraction)
        assert "pain (Pain Increase or Unbearable)" in prompt
        assert '"conversation_log_ids"' in prompt


class TestRunExtraction:
    def test_single_call_when_valid(self, protocol):
        session = make_session()
        provider = ScriptedProvider([extraction_json()])
        result = run_extraction(session, provider, protocol)
        assert result == ExtractionResult.empty()
        assert len(provider.requests) == 1

    def test_retry_with_corrective_message(self, protocol):
        session = make_session()
        provider = ScriptedProvider(["not json", extraction_json()])
        result = run_extraction(session, provider, protocol)
        assert result == ExtractionResult.empty()
        assert len(provider.requests) == 2
        assert any("invalid" in t for t in provider.requests[1].texts())

    def test_retry_budget_exhausted(self, protocol):
        session = make_session()
        provider = ScriptedProvider(["junk", "more junk"])
        with pytest.raises(NotJson):
            run_extraction(session, provider, protocol, retries=1)
        assert provider.remaining == 0

    def test_provider_errors_propagate(self, protocol):
        with pytest.raises(ScriptExhausted):
            run_extraction(make_session(), ScriptedProvider([]), protocol)


class TestRunSummarization:
    def test_skipped_when_nothing_reported(self, protocol):
        provider = ScriptedProvider([])
        entries = run_summarization(
            make_session(), ExtractionResult.empty(), provider, protocol
        )
        assert entries == []
        assert provider.requests == []  # gating: no provider call at all

    def test_called_when_symptom_reported(self, protocol):
        session = make_session()
        extraction = validate_extraction(
            extraction_json(pain={"logs": [1, 2], "state": 2, "scale": 5}),
            session,
            protocol,
        )
        provider = ScriptedProvider(
            [
                '{"result": [{"category": "Summary",'
                ' "conversation_log_ids": "[1, 2]", "content": "pain 5/10"}]}'
            ]
        )
        entries = run_summarization(session, extraction, provider, protocol)
        assert entries[0].content == "pain 5/10"
        assert len(provider.requests) == 1


class TestDisplay:
    def reported(self, protocol, key, scale=None):
        return validate_extraction(
            extraction_json(
                **{
                    key.value: {
                        "logs": [1, 2],
                        "state": 2,
                        **({"scale": scale} if scale is not None else {}),
                    }
                }
            ),
            make_session(),
            protocol,
        )

    def test_state_colors(self, protocol):
        extraction = validate_extraction(
            extraction_json(
                fever={"logs": [1, 2], "state": 2},
                mood={"logs": [3, 4], "state": 1},
            ),
            make_session(),
            protocol,
        )
        slots = render_symptom_status(extraction, [], protocol)
        assert slots["fever"]["color"] == "red"  # most severe class
        assert slots["mood"]["color"] == "green"
        assert slots["breathing"]["color"] == "gray"

    def test_override_recolors(self, protocol):
        extraction = self.reported(protocol, QuestionKey.FEVER)
        override = SeverityOverride(
            key=QuestionKey.FEVER,
            severity=SeverityClass.LEAST_SEVERE,
            author="dr",
            at=NOW,
        )
        slots = render_symptom_status(extraction, [override], protocol)
        assert slots["fever"]["color"] == "blue"
        assert slots["fever"]["severity"] == "least_severe"

    def test_scale_shown_only_for_reported_rating_keys(self, protocol):
        extraction = self.reported(protocol, QuestionKey.PAIN, scale=8)
        slots = render_symptom_status(extraction, [], protocol)
        assert slots["pain"]["scale"] == 8
        assert slots["fever"]["scale"] is None

    def test_misc_reported_shows_purple(self, protocol):
        extraction = self.reported(protocol, QuestionKey.MISC)
        slots = render_symptom_status(extraction, [], protocol)
        assert slots["misc"]["color"] == "purple"


class TestRank:
    def report(self, protocol, extraction, **kwargs):
        from rpm_checkin.pipeline import DailyReport

        return DailyReport(
            patient_id="p900",
            service_day=SERVICE_DAY,
            extraction=extraction,
            generated_at=NOW,
            **kwargs,
        )

    def test_rank_zero_when_nothing_reported(self, protocol):
        report = self.report(protocol, ExtractionResult.empty())
        assert compute_patient_severity(report, protocol) == 0

    def test_rank_is_max_severity(self, protocol):
        extraction = validate_extraction(
            extraction_json(
                mood={"logs": [1, 2], "state": 2},  # least_severe -> 2
                drainage={"logs": [3, 4], "state": 2},  # moderate -> 3
            ),
            make_session(),
            protocol,
        )
        report = self.report(protocol, extraction)
        assert compute_patient_severity(report, protocol) == 3

    def test_override_changes_rank(self, protocol):
        extraction = validate_extraction(
            extraction_json(mood={"logs": [1, 2], "state": 2}),
            make_session(),
            protocol,
        )
        report = self.report(protocol, extraction)
        assert report.rank(protocol) == 2
        report.overrides.append(
            SeverityOverride(
                key=QuestionKey.MOOD,
                severity=SeverityClass.MOST_SEVERE,
                author="dr",
                at=NOW,
            )
        )
        assert report.rank(protocol) == 4

    def test_pin_wins(self, protocol):
        extraction = validate_extraction(
            extraction_json(fever={"logs": [1, 2], "state": 2}),
            make_session(),
            protocol,
        )
        report = self.report(
            protocol, extraction, rank_pin=RankPin(rank=1, author="dr", at=NOW)
        )
        assert compute_patient_severity(report, protocol) == 1

    def test_pin_range_validated(self):
        with pytest.raises(ValueError):
            RankPin(rank=5, author="dr", at=NOW)


class TestRunPipeline:
    def test_happy_path(self, protocol, store, day1_session, day1_analysis):
        provider = ScriptedProvider(list(day1_analysis))
        report = run_pipeline(
            day1_session, provider, protocol, store, clock=make_clock()
        )
        assert not report.needs_review
        assert report.rank(protocol) == 4
        pain = report.extraction.finding(QuestionKey.PAIN)
        assert (pain.state, pain.scale) == (2, 8)
        assert pain.log_ids == tuple(range(5, 14))
        eating = report.extraction.finding(QuestionKey.EATING)
        assert (eating.state, eating.scale, eating.log_ids) == (2, 8, (5, 14, 15))
        constipation = report.extraction.finding(QuestionKey.CONSTIPATION)
        assert (constipation.state, constipation.scale) == (2, 6)
        assert report.summaries[0].log_ids == (5, 13, 15, 29, 31)
        assert store.get_report("p001", SERVICE_DAY) is not None

    def test_extraction_failure_flags_review(self, protocol, store, day1_session):
        provider = ScriptedProvider(["junk", "junk again"])
        report = run_pipeline(
            day1_session, provider, protocol, store, clock=make_clock()
        )
        assert report.needs_review
        assert report.extraction == ExtractionResult.empty()
        assert report.summaries == []
        assert report.rank(protocol) == 0
        # No summarization attempt: both completions went to extraction.
        assert provider.remaining == 0 and len(provider.requests) == 2

    def test_summarization_failure_flags_review(
        self, protocol, store, day1_session, day1_analysis
    ):
        provider = ScriptedProvider([day1_analysis[0], "not a summary"])
        report = run_pipeline(
            day1_session, provider, protocol, store, clock=make_clock()
        )
        assert report.needs_review
        assert report.summaries == []
        assert report.rank(protocol) == 4  # extraction still stands

    def test_rerun_preserves_clinician_state(
        self, protocol, store, day1_session, day1_analysis
    ):
        provider = ScriptedProvider(list(day1_analysis))
        first = run_pipeline(
            day1_session, provider, protocol, store, clock=make_clock()
        )
        first.notes.append(Note(author="dr", at=NOW, text="check the wound"))
        first.review.unread = False
        first.review.reviewed = True
        first.review.reviewer = "dr"
        first.review.reviewed_at = NOW
        first.overrides.append(
            SeverityOverride(
                key=QuestionKey.PAIN,
                severity=SeverityClass.MODERATE,
                author="dr",
                at=NOW,
            )
        )
        first.rank_pin = RankPin(rank=2, author="dr", at=NOW)
        store.put_report(first)

        rerun_provider = ScriptedProvider(list(day1_analysis))
        second = run_pipeline(
            day1_session, rerun_provider, protocol, store, clock=make_clock()
        )
        assert [n.text for n in second.notes] == ["check the wound"]
        assert second.review.reviewed and second.review.reviewer == "dr"
        assert [o.key for o in second.overrides] == [QuestionKey.PAIN]
        assert second.rank_pin.rank == 2
        assert compute_patient_severity(second, protocol) == 2  # pin preserved
        assert second.extraction == first.extraction

    def test_report_round_trip(self, protocol, store, day1_session, day1_analysis):
        from rpm_checkin.pipeline import DailyReport

        provider = ScriptedProvider(list(day1_analysis))
        report = run_pipeline(
            day1_session, provider, protocol, store, clock=make_clock()
        )
        clone = DailyReport.from_dict(report.to_dict())
        assert clone.to_dict() == report.to_dict()
