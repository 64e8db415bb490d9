"""HTTP JSON API for the adjudication workflow, plus static frontend hosting."""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from ..corpus import ingest
from ..discovery import load_ledger
from .store import ReviewError, SessionNotFound, SessionStore, VersionConflict

BUNDLED_WEBUI = Path(__file__).resolve().parent.parent / "webui"


class CreateSessionRequest(BaseModel):
    ledger_path: str
    corpus_path: str
    corpus_format: str = "jsonl"
    annotator_ids: list[str] = Field(min_length=1, max_length=2)
    variable_definition: str = ""


class AdjudicationRequest(BaseModel):
    incident_id: str
    annotator_id: str
    verdict: str
    note: str = ""
    version: int


class ExportRequest(BaseModel):
    resolution: str = "consensus_only"


def create_app(store: SessionStore, static_dir: Path | None = None) -> FastAPI:
    app = FastAPI(title="labelaudit review service")

    def _get_state(session_id: str):
        try:
            return store.get(session_id)
        except SessionNotFound as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.post("/api/sessions", status_code=201)
    def create_session(request: CreateSessionRequest):
        try:
            ledger = load_ledger(request.ledger_path)
            corpus = ingest(request.corpus_path, request.corpus_format)
            state = store.create_session(
                ledger, corpus, request.annotator_ids, request.variable_definition
            )
        except FileNotFoundError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except ReviewError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return state.to_dict()

    @app.get("/api/sessions")
    def list_sessions():
        return {"sessions": store.list_sessions()}

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str):
        return _get_state(session_id).to_dict()

    @app.get("/api/sessions/{session_id}/items")
    def get_items(
        session_id: str,
        status: str | None = Query(default=None),
        annotator: str | None = Query(default=None),
    ):
        _get_state(session_id)
        try:
            return {"items": store.items_view(session_id, annotator, status)}
        except ReviewError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.post("/api/sessions/{session_id}/adjudications", status_code=201)
    def submit_adjudication(session_id: str, request: AdjudicationRequest):
        _get_state(session_id)
        try:
            stored = store.submit(
                session_id,
                request.incident_id,
                request.annotator_id,
                request.verdict,
                request.note,
                request.version,
            )
        except VersionConflict as exc:
            raise HTTPException(
                status_code=409,
                detail={
                    "message": str(exc),
                    "incident_id": exc.incident_id,
                    "annotator_id": exc.annotator_id,
                    "latest_version": exc.latest,
                },
            ) from exc
        except ReviewError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return stored

    @app.get("/api/sessions/{session_id}/iaa")
    def get_iaa(session_id: str):
        _get_state(session_id)
        try:
            return store.compute_iaa(session_id)
        except ReviewError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc

    @app.post("/api/sessions/{session_id}/export")
    def export_session(session_id: str, request: ExportRequest):
        _get_state(session_id)
        try:
            return store.export(session_id, request.resolution)
        except ReviewError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc

    assets = static_dir if static_dir is not None else BUNDLED_WEBUI
    if assets and Path(assets).is_dir():
        app.mount("/", StaticFiles(directory=str(assets), html=True), name="webui")
    return app
