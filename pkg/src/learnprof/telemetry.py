"""Telemetry ingestion: an append-only event store behind a small HTTP API.

Wire format (JSON over HTTP):

* ``POST /api/answers`` -- body per AnswersPayload below; replies
  ``{"eventId": n}`` once the event is durably appended.
* ``POST /api/bug-reports`` -- body per BugReportPayload.
* ``GET /api/export?kind=&from=&to=`` -- NDJSON stream of stored events in
  eventId order; requires ``Authorization: Bearer <token>`` where the token
  comes from the LEARNPROF_EXPORT_TOKEN environment variable.

Malformed payloads get a 4xx ``{"error": "..."}`` with a field-level message
and leave the store untouched. Events are never mutated or deleted; client
``correct`` flags are stored verbatim but analysis regrades from the raw
answers whenever the versioned quiz registry knows the question.
"""

import json
import os
import re
import threading
import time
import uuid
from pathlib import Path
from typing import Any, Iterable, Iterator

from fastapi import FastAPI, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel, Field, ValidationError, field_validator

KIND_ANSWERS = "answers"
KIND_BUG_REPORT = "bugReport"

_HEX40 = re.compile(r"^[0-9a-f]{40}$")


class StoreError(Exception):
    """The event store could not be read or written."""


class AnswerItem(BaseModel):
    questionId: str
    answer: Any
    correct: bool
    durationMs: int = Field(ge=0)
    justification: str | None = None

    @field_validator("questionId")
    @classmethod
    def _uuid(cls, v: str) -> str:
        uuid.UUID(v)
        return v


class AnswersPayload(BaseModel):
    sessionId: str
    quizName: str = Field(min_length=1)
    commitHash: str
    attempt: int = Field(ge=0)
    clientTimestampMs: int
    answers: list[AnswerItem] = Field(min_length=1)

    @field_validator("sessionId")
    @classmethod
    def _uuid(cls, v: str) -> str:
        uuid.UUID(v)
        return v

    @field_validator("commitHash")
    @classmethod
    def _hex40(cls, v: str) -> str:
        if not _HEX40.fullmatch(v):
            raise ValueError("must be 40 lowercase hex characters")
        return v


class BugReportPayload(BaseModel):
    sessionId: str
    questionId: str
    text: str = Field(min_length=1)
    clientTimestampMs: int

    @field_validator("sessionId", "questionId")
    @classmethod
    def _uuid(cls, v: str) -> str:
        uuid.UUID(v)
        return v


class EventStore:
    """Append-only NDJSON event log with totally ordered event ids.

    All writes are serialized through one lock, so eventId order equals
    ingestion order; an append is acknowledged only after the line has been
    flushed and fsynced. Readers open their own handle and therefore see a
    consistent prefix while writes continue.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._next_id = self._scan_next_id()
        self._handle = open(self.path, "a", encoding="utf-8")

    def _scan_next_id(self) -> int:
        if not self.path.exists():
            return 1
        last = 0
        with open(self.path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                try:
                    last = max(last, int(json.loads(line)["eventId"]))
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise StoreError(f"corrupt store line in {self.path}: {exc}") from exc
        return last + 1

    def append(self, kind: str, body: dict) -> dict:
        """Durably append one event and return its stored envelope."""
        with self._lock:
            event = {
                "eventId": self._next_id,
                "receivedAtMs": int(time.time() * 1000),
                "kind": kind,
                "body": body,
            }
            try:
                self._handle.write(json.dumps(event, ensure_ascii=False, separators=(",", ":")) + "\n")
                self._handle.flush()
                os.fsync(self._handle.fileno())
            except (OSError, ValueError) as exc:  # ValueError: handle closed
                raise StoreError(f"cannot append to {self.path}: {exc}") from exc
            self._next_id += 1
            return event

    def replay(self, lines: Iterable[str]) -> int:
        """Load exported events verbatim into this (fresh) store.

        Envelopes keep their original eventId and receivedAtMs, so a replayed
        store is equivalent to the one that produced the export.
        """
        count = 0
        with self._lock:
            for line in lines:
                line = line.strip()
                if not line:
                    continue
                event = json.loads(line)
                if event["eventId"] < self._next_id:
                    raise StoreError(
                        f"replayed eventId {event['eventId']} is not above {self._next_id - 1}")
                self._handle.write(json.dumps(event, ensure_ascii=False, separators=(",", ":")) + "\n")
                self._next_id = event["eventId"] + 1
                count += 1
            self._handle.flush()
            os.fsync(self._handle.fileno())
        return count

    def events(
        self,
        kind: str | None = None,
        from_ms: int | None = None,
        to_ms: int | None = None,
    ) -> Iterator[dict]:
        """Stored events in eventId order, optionally filtered."""
        if not self.path.exists():
            return
        with open(self.path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                event = json.loads(line)
                if kind is not None and event["kind"] != kind:
                    continue
                if from_ms is not None and event["receivedAtMs"] < from_ms:
                    continue
                if to_ms is not None and event["receivedAtMs"] >= to_ms:
                    continue
                yield event

    def export_lines(self, **filters) -> Iterator[str]:
        for event in self.events(**filters):
            yield json.dumps(event, ensure_ascii=False, separators=(",", ":")) + "\n"

    def close(self) -> None:
        self._handle.close()


def create_app(
    store: EventStore,
    known_question_ids: set[str] | None = None,
    export_token: str | None = None,
) -> FastAPI:
    """Build the ingestion app around a store.

    When ``known_question_ids`` is given (usually from a book manifest),
    events referencing unknown questions are still accepted -- content
    evolves -- but the acknowledgment carries a warning. The export token
    defaults to LEARNPROF_EXPORT_TOKEN; with no token configured, export is
    refused outright.
    """
    app = FastAPI(title="learnprof telemetry")
    token = export_token if export_token is not None else os.environ.get("LEARNPROF_EXPORT_TOKEN")

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        first = exc.errors()[0]
        loc = ".".join(str(p) for p in first["loc"] if p != "body")
        return JSONResponse(status_code=400, content={"error": f"{loc}: {first['msg']}"})

    def _unknown_questions(question_ids: Iterable[str]) -> list[str]:
        if known_question_ids is None:
            return []
        return sorted({q for q in question_ids if q not in known_question_ids})

    async def _validated_body(request: Request, model):
        """Parse and validate, but keep the raw JSON so the stored body is
        the payload verbatim."""
        try:
            raw = await request.json()
        except json.JSONDecodeError as exc:
            return None, None, JSONResponse(status_code=400, content={"error": f"body: {exc}"})
        try:
            payload = model.model_validate(raw)
        except ValidationError as exc:
            first = exc.errors()[0]
            loc = ".".join(str(p) for p in first["loc"])
            return None, None, JSONResponse(status_code=400,
                                            content={"error": f"{loc}: {first['msg']}"})
        return raw, payload, None

    def _ack(kind: str, body: dict, warnings: list[str]):
        try:
            event = store.append(kind, body)
        except StoreError as exc:
            return JSONResponse(status_code=503, content={"error": str(exc)})
        out: dict[str, Any] = {"eventId": event["eventId"]}
        if warnings:
            out["warnings"] = warnings
        return out

    @app.post("/api/answers")
    async def ingest_answers(request: Request):
        raw, payload, error = await _validated_body(request, AnswersPayload)
        if error is not None:
            return error
        unknown = _unknown_questions(a.questionId for a in payload.answers)
        return _ack(KIND_ANSWERS, raw, [f"unknown questionId {q}" for q in unknown])

    @app.post("/api/bug-reports")
    async def ingest_bug_report(request: Request):
        raw, payload, error = await _validated_body(request, BugReportPayload)
        if error is not None:
            return error
        unknown = _unknown_questions([payload.questionId])
        return _ack(KIND_BUG_REPORT, raw, [f"unknown questionId {q}" for q in unknown])

    @app.get("/api/export")
    async def export_events(
        request: Request,
        kind: str | None = Query(default=None, pattern="^(answers|bugReport)$"),
        from_ms: int | None = Query(default=None, alias="from"),
        to_ms: int | None = Query(default=None, alias="to"),
    ):
        auth = request.headers.get("authorization", "")
        if not token or auth != f"Bearer {token}":
            return JSONResponse(status_code=401, content={"error": "bad export token"})
        lines = store.export_lines(kind=kind, from_ms=from_ms, to_ms=to_ms)
        return StreamingResponse(lines, media_type="application/x-ndjson")

    return app
