"""HTTP service under /v1: the patient channel webhook and clinician endpoints.

The channel webhook is transport-agnostic text-in/text-out so any messaging
or voice front end can adapt to it. Clinician endpoints authenticate with
static bearer tokens from config. Every failure maps to one machine code in
a stable {"error": {"code", "message"}} envelope; stack traces never leak.
"""
from __future__ import annotations

import logging
from datetime import date
from typing import Any

from fastapi import Depends, FastAPI, Header, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import triage
from .config import Service
from .engine import EmptyUtterance, EngineFallback, Phase, Session
from .gateway import GatewayError
from .pipeline import DailyReport
from .protocol import SeverityClass
from .triage import RANK_COLORS, EmptyNote, InvalidKey, UnknownReport, coerce_key

log = logging.getLogger(__name__)


class ApiError(Exception):
    """One named failure: HTTP status plus a stable machine code."""

    def __init__(self, status: int, code: str, message: str) -> None:
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class UtteranceIn(BaseModel):
    channel_token: str
    text: str
    day: str | None = None


class OverrideIn(BaseModel):
    severity: str
    author: str = "clinician"


class RankPinIn(BaseModel):
    rank: int
    author: str = "clinician"


class ReviewedIn(BaseModel):
    reviewer: str = "clinician"


class NoteIn(BaseModel):
    text: str
    author: str = "clinician"


def _parse_day(value: str | None, service: Service) -> date:
    if value is None:
        return service.config.today()
    try:
        return date.fromisoformat(value)
    except ValueError:
        raise ApiError(422, "bad_day", f"day must be an ISO date, got {value!r}")


def _parse_severity(value: str) -> SeverityClass:
    try:
        return SeverityClass(value)
    except ValueError:
        tokens = ", ".join(s.value for s in SeverityClass)
        raise ApiError(422, "bad_severity", f"severity must be one of: {tokens}")


def _report_payload(
    report: DailyReport, session: Session | None, service: Service
) -> dict[str, Any]:
    rank = report.rank(service.protocol)
    return {
        "patient_id": report.patient_id,
        "service_day": report.service_day.isoformat(),
        "rank": rank,
        "dot_color": RANK_COLORS[rank].value,
        "needs_review": report.needs_review,
        "display": report.display(service.protocol),
        "summaries": [entry.to_dict() for entry in report.summaries],
        "notes": [note.to_dict() for note in report.notes],
        "review": report.review.to_dict(),
        "overrides": [override.to_dict() for override in report.overrides],
        "rank_pin": report.rank_pin.to_dict() if report.rank_pin else None,
        "turns": [turn.to_dict() for turn in session.turns] if session else [],
        "generated_at": report.generated_at.isoformat(),
    }


def create_app(service: Service) -> FastAPI:
    app = FastAPI(title="rpm-checkin", openapi_url=None, docs_url=None, redoc_url=None)

    def require_clinician(authorization: str = Header(default="")) -> str:
        scheme, _, token = authorization.partition(" ")
        if scheme.lower() != "bearer" or not token:
            raise ApiError(401, "unauthorized", "missing bearer token")
        if token not in service.config.clinician_tokens:
            raise ApiError(403, "forbidden", "unrecognized clinician token")
        return token

    @app.exception_handler(ApiError)
    async def handle_api_error(_request: Request, exc: ApiError) -> JSONResponse:
        return JSONResponse(
            status_code=exc.status,
            content={"error": {"code": exc.code, "message": exc.message}},
        )

    @app.exception_handler(RequestValidationError)
    async def handle_validation(_request: Request, exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(
            status_code=422,
            content={"error": {"code": "invalid_request", "message": str(exc.errors()[:1])}},
        )

    @app.exception_handler(Exception)
    async def handle_unexpected(_request: Request, exc: Exception) -> JSONResponse:
        log.exception("unhandled error: %s", exc)
        return JSONResponse(
            status_code=500,
            content={"error": {"code": "internal_error", "message": "internal error"}},
        )

    # -- patient channel ----------------------------------------------------

    @app.post("/v1/channel/utterance")
    def channel_utterance(body: UtteranceIn) -> JSONResponse:
        patient = service.store.get_patient_by_token(body.channel_token)
        if patient is None:
            raise ApiError(401, "unknown_token", "channel token does not resolve")
        day = _parse_day(body.day, service)
        session = service.engine.resume_or_start(patient.patient_id, day)
        try:
            reply = service.engine.handle_patient_utterance(session, body.text)
        except EmptyUtterance:
            raise ApiError(422, "empty_text", "utterance text is empty")
        except EngineFallback as exc:
            return JSONResponse(
                status_code=503,
                content={
                    "reply": exc.fallback_reply,
                    "phase": session.phase.value,
                    "complete": session.checklist.is_complete,
                    "degraded": True,
                },
            )
        return JSONResponse(
            content={
                "reply": reply,
                "phase": session.phase.value,
                "complete": session.checklist.is_complete,
                "degraded": False,
            }
        )

    # -- clinician endpoints --------------------------------------------------

    @app.get("/v1/patients")
    def list_patients(
        day: str | None = None, _token: str = Depends(require_clinician)
    ) -> dict[str, Any]:
        service_day = _parse_day(day, service)
        overviews = triage.list_patients_sorted(
            service.store, service_day, service.protocol
        )
        return {
            "day": service_day.isoformat(),
            "patients": [overview.to_dict() for overview in overviews],
        }

    @app.get("/v1/patients/{patient_id}")
    def patient_detail(
        patient_id: str, _token: str = Depends(require_clinician)
    ) -> dict[str, Any]:
        patient = service.store.get_patient(patient_id)
        if patient is None:
            raise ApiError(404, "unknown_patient", f"no patient {patient_id!r}")
        days = service.store.report_days(patient_id)
        return {
            "patient": {
                "patient_id": patient.patient_id,
                "display_name": patient.display_name,
                "demographics": patient.demographics,
                "surgery": patient.surgery,
                "enrolled_on": patient.enrolled_on.isoformat(),
            },
            "report_days": [d.isoformat() for d in days],
        }

    def _require_report(patient_id: str, day: date) -> DailyReport:
        report = service.store.get_report(patient_id, day)
        if report is None:
            raise ApiError(
                404, "unknown_report", f"no report for {patient_id} on {day.isoformat()}"
            )
        return report

    @app.get("/v1/reports/{patient_id}/{day}")
    def report_detail(
        patient_id: str, day: str, _token: str = Depends(require_clinician)
    ) -> dict[str, Any]:
        service_day = _parse_day(day, service)
        _require_report(patient_id, service_day)
        report = triage.mark_opened(service.store, patient_id, service_day)
        session = service.store.get_session(patient_id, service_day)
        return _report_payload(report, session, service)

    @app.patch("/v1/reports/{patient_id}/{day}/symptoms/{key}")
    def override_symptom(
        patient_id: str,
        day: str,
        key: str,
        body: OverrideIn,
        _token: str = Depends(require_clinician),
    ) -> dict[str, Any]:
        service_day = _parse_day(day, service)
        try:
            question_key = coerce_key(key)
        except InvalidKey as exc:
            raise ApiError(422, "bad_symptom_key", str(exc))
        severity = _parse_severity(body.severity)
        try:
            report = triage.apply_severity_override(
                service.store, patient_id, service_day, question_key, severity, body.author
            )
        except UnknownReport as exc:
            raise ApiError(404, "unknown_report", str(exc))
        session = service.store.get_session(patient_id, service_day)
        return _report_payload(report, session, service)

    @app.patch("/v1/reports/{patient_id}/{day}/rank")
    def pin_rank(
        patient_id: str,
        day: str,
        body: RankPinIn,
        _token: str = Depends(require_clinician),
    ) -> dict[str, Any]:
        service_day = _parse_day(day, service)
        if not 0 <= body.rank <= 4:
            raise ApiError(422, "bad_rank", "rank must be between 0 and 4")
        try:
            report = triage.apply_rank_pin(
                service.store, patient_id, service_day, body.rank, body.author
            )
        except UnknownReport as exc:
            raise ApiError(404, "unknown_report", str(exc))
        session = service.store.get_session(patient_id, service_day)
        return _report_payload(report, session, service)

    @app.post("/v1/reports/{patient_id}/{day}/reviewed")
    def mark_reviewed(
        patient_id: str,
        day: str,
        body: ReviewedIn,
        _token: str = Depends(require_clinician),
    ) -> dict[str, Any]:
        service_day = _parse_day(day, service)
        try:
            report = triage.mark_reviewed(
                service.store, patient_id, service_day, body.reviewer
            )
        except UnknownReport as exc:
            raise ApiError(404, "unknown_report", str(exc))
        session = service.store.get_session(patient_id, service_day)
        return _report_payload(report, session, service)

    @app.post("/v1/reports/{patient_id}/{day}/notes")
    def add_note(
        patient_id: str,
        day: str,
        body: NoteIn,
        _token: str = Depends(require_clinician),
    ) -> dict[str, Any]:
        service_day = _parse_day(day, service)
        try:
            report = triage.add_note(
                service.store, patient_id, service_day, body.author, body.text
            )
        except UnknownReport as exc:
            raise ApiError(404, "unknown_report", str(exc))
        except EmptyNote as exc:
            raise ApiError(422, "empty_note", str(exc))
        session = service.store.get_session(patient_id, service_day)
        return _report_payload(report, session, service)

    @app.post("/v1/sessions/{patient_id}/{day}/close")
    def close_session(
        patient_id: str, day: str, _token: str = Depends(require_clinician)
    ) -> dict[str, Any]:
        service_day = _parse_day(day, service)
        session = service.store.get_session(patient_id, service_day)
        if session is None:
            raise ApiError(
                404,
                "unknown_session",
                f"no session for {patient_id} on {service_day.isoformat()}",
            )
        already_closed = session.phase is Phase.CLOSED
        degraded = False
        if not already_closed:
            try:
                service.engine.close_session(session)
            except GatewayError as exc:
                # The close itself persisted; only the analysis run failed.
                log.error("pipeline failed after close: %s", exc)
                degraded = True
        report = service.store.get_report(patient_id, service_day)
        return {
            "closed": True,
            "already_closed": already_closed,
            "report_ready": report is not None,
            "degraded": degraded,
        }

    return app
