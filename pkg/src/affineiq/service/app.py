"""HTTP surface of the 2AFC experiment service."""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse
from fastapi.staticfiles import StaticFiles

from ..errors import ArgumentError, ConflictError, SetupError
from .schemas import (
    LevelSummary,
    ResponseAck,
    ResponseSubmission,
    SessionCreated,
    SessionCreateRequest,
    SessionSummary,
    TrialPayload,
)
from .store import SessionStore


def create_app(data_dir: Path, ui_dir: Path | None = None) -> FastAPI:
    app = FastAPI(title="affineiq 2AFC experiment service")
    store = SessionStore(Path(data_dir))
    app.state.store = store

    @app.post("/api/session", response_model=SessionCreated, status_code=201)
    def create_session(req: SessionCreateRequest):
        try:
            session = store.create(req)
        except SetupError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return SessionCreated(id=session.id, observer=session.observer, total=session.total)

    @app.get("/api/session/{session_id}/trial", response_model=TrialPayload)
    def next_trial(session_id: str):
        try:
            session, trial = store.current_trial(session_id)
        except ArgumentError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        if trial is None:
            return TrialPayload(done=True, total=session.total)
        # interval order is fixed by the plan; the payload never says which
        # side holds the distorted image
        left, right = (
            (trial.dist, trial.ref) if trial.side == "left" else (trial.ref, trial.dist)
        )
        return TrialPayload(
            done=False, index=session.cursor, total=session.total, left=left, right=right
        )

    @app.post("/api/session/{session_id}/response", response_model=ResponseAck)
    def submit_response(session_id: str, submission: ResponseSubmission):
        try:
            store.submit(session_id, submission.index, submission.choice)
        except ConflictError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except ArgumentError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        session = store.get(session_id)
        return ResponseAck(accepted=True, index=submission.index, done=session.done)

    @app.get("/api/stimulus/{key:path}")
    def stimulus(key: str):
        try:
            path = store.stimulus_path(key)
        except ArgumentError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return FileResponse(path, media_type="image/png")

    @app.get("/api/session/{session_id}/summary", response_model=SessionSummary)
    def summary(session_id: str):
        try:
            payload = store.summary(session_id)
        except ArgumentError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return SessionSummary(
            id=payload["id"],
            observer=payload["observer"],
            kind=payload["kind"],
            axis=payload["axis"],
            total=payload["total"],
            completed=payload["completed"],
            done=payload["done"],
            levels=[LevelSummary(**lv) for lv in payload["levels"]],
        )

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
