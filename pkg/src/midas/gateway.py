"""HTTP/SSE service exposing the engine to the UI and to headless clients.

Every mutating endpoint maps 1:1 onto a core or orchestrator operation; the
gateway holds no state of its own. Commands go over POST; phase telemetry
flows out as one server-sent-event stream per session, ordered exactly like
the session event log (event id = log index, so clients can resume).
"""

from __future__ import annotations

import json
import queue
from typing import Any, Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, PlainTextResponse, StreamingResponse
from pydantic import BaseModel, Field

from .engine import Engine
from .model import MidasError, Override, Phase, ValidationError
from .orchestrator import GateError, HumanApproval, PhaseOrderError
from .persistence import SessionNotFound
from .providers import ProviderError


class CreateSessionBody(BaseModel):
    problem_text: str = Field(min_length=1)
    seed: int = 0
    config: Optional[dict[str, Any]] = None


class ProblemBody(BaseModel):
    text: Optional[str] = None


class IdeaBody(BaseModel):
    text: str = Field(min_length=1)


class LiteratureBody(BaseModel):
    entries: list[dict[str, str]]


class AdvanceBody(BaseModel):
    approved_by: Optional[str] = None
    note: str = ""


class RerunBody(BaseModel):
    phase: str


class OverrideBody(BaseModel):
    kind: str
    idea_id: Optional[str] = None
    title: str = ""
    action: str = ""
    object: str = ""
    context: str = ""
    reason: str = ""


def create_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="midas", version="0.1.0")

    from fastapi.middleware.cors import CORSMiddleware

    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],  # the companion UI is served from its own origin
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def malformed_body(_request: Request, exc: RequestValidationError) -> JSONResponse:
        fields = [
            {"field": ".".join(str(p) for p in err["loc"]), "message": err["msg"]}
            for err in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"detail": fields})

    @app.exception_handler(MidasError)
    async def domain_error(_request: Request, exc: MidasError) -> JSONResponse:
        if isinstance(exc, SessionNotFound):
            status = 404
        elif isinstance(exc, (GateError, PhaseOrderError)):
            status = 409
        elif isinstance(exc, ProviderError):
            status = 502
        elif isinstance(exc, ValidationError):
            status = 400
        else:
            status = 400
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody) -> dict:
        config = None
        if body.config is not None:
            from .model import SessionConfig

            config = SessionConfig.from_dict(body.config)
        session = engine.create_session(body.problem_text, config, body.seed)
        return engine.summary(session.id)

    @app.get("/sessions")
    def list_sessions() -> dict:
        return {"sessions": [engine.summary(sid) for sid in engine.list_sessions()]}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        return engine.get(session_id).to_dict()

    @app.post("/sessions/{session_id}/problem")
    def submit_problem(session_id: str, body: Optional[ProblemBody] = None) -> dict:
        session = engine.submit_problem(session_id, body.text if body else None)
        problem = session.problem
        return {
            "session": engine.summary(session_id),
            "problem": problem.to_dict() if problem else None,
        }

    @app.post("/sessions/{session_id}/ideas", status_code=201)
    def submit_idea(session_id: str, body: IdeaBody) -> dict:
        session = engine.submit_idea(session_id, body.text)
        return {"idea": session.vaults.idea_vault[-1].to_dict()}

    @app.post("/sessions/{session_id}/literature", status_code=201)
    def submit_literature(session_id: str, body: LiteratureBody) -> dict:
        before = len(engine.get(session_id).vaults.literature_vault)
        session = engine.submit_literature(session_id, body.entries)
        added = session.vaults.literature_vault[before:]
        return {"entries": [e.to_dict() for e in added]}

    @app.post("/sessions/{session_id}/advance")
    def advance(session_id: str, body: Optional[AdvanceBody] = None) -> dict:
        approval = None
        if body is not None and body.approved_by:
            approval = HumanApproval(approved_by=body.approved_by, note=body.note)
        engine.advance(session_id, approval)
        return engine.summary(session_id)

    @app.post("/sessions/{session_id}/rerun")
    def rerun(session_id: str, body: RerunBody) -> dict:
        try:
            target = Phase(body.phase)
        except ValueError:
            raise ValidationError(f"unknown phase {body.phase!r}") from None
        engine.rerun(session_id, target)
        return engine.summary(session_id)

    @app.post("/sessions/{session_id}/overrides")
    def apply_override(session_id: str, body: OverrideBody) -> dict:
        session = engine.override(
            session_id,
            Override(
                kind=body.kind,
                idea_id=body.idea_id,
                title=body.title,
                action=body.action,
                object=body.object,
                context=body.context,
                reason=body.reason,
            ),
        )
        doc: dict[str, Any] = {"session": engine.summary(session_id)}
        if body.idea_id:
            doc["idea"] = session.vaults.idea(body.idea_id).to_dict()
        else:
            doc["idea"] = session.vaults.idea_vault[-1].to_dict()
        return doc

    @app.get("/sessions/{session_id}/clusters")
    def clusters(session_id: str) -> dict:
        return engine.clusters(session_id)

    @app.get("/sessions/{session_id}/report")
    def report(session_id: str, format: str = "json"):
        document = engine.report(session_id, format)
        if format == "markdown":
            return PlainTextResponse(document, media_type="text/markdown")
        return document

    @app.get("/sessions/{session_id}/events")
    def events(
        session_id: str,
        request: Request,
        from_index: int = 0,
        max_events: Optional[int] = None,
    ) -> StreamingResponse:
        last_event_id = request.headers.get("last-event-id")
        if last_event_id is not None:
            try:
                from_index = int(last_event_id) + 1
            except ValueError:
                pass
        snapshot, live = engine.subscribe(session_id, from_index)

        def stream():
            sent = 0
            try:
                for event in snapshot:
                    yield _sse(event)
                    sent += 1
                    if max_events is not None and sent >= max_events:
                        return
                while max_events is None or sent < max_events:
                    try:
                        event = live.get(timeout=2.0)
                    except queue.Empty:
                        if max_events is not None:
                            return  # bounded streams end instead of idling
                        yield ": keep-alive\n\n"
                        continue
                    yield _sse(event)
                    sent += 1
            finally:
                engine.unsubscribe(session_id, live)

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app


def _sse(event: dict) -> str:
    return f"id: {event['index']}\nevent: {event['kind']}\ndata: {json.dumps(event)}\n\n"


def serve(engine: Engine, host: str = "127.0.0.1", port: int = 8400) -> None:
    import uvicorn

    uvicorn.run(create_app(engine), host=host, port=port)
