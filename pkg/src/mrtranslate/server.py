"""HTTP service for the blinded perceptual study.

Endpoints:
  POST /sessions {composition?, seed?}          -> {session_id, total}
  GET  /sessions/{id}                           -> progress
  GET  /sessions/{id}/next                      -> blinded item payload
  POST /sessions/{id}/ratings                   -> acknowledgment
  GET  /sessions/{id}/report[?partial=true]     -> PerceptualReport (403 until complete)

Images travel as base64 PNG inside the blinded payload. Sessions are held in
memory and mirrored to an append-only store, so a restarted server resumes
them transparently. Handlers are async without awaits in their bodies, so
each request runs atomically on the event loop: rating writes within a
session are strictly serialized.
"""

from __future__ import annotations

import base64
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .errors import (
    ConfigError,
    EmptySessionError,
    NotFoundError,
    OrderViolationError,
    SessionCompleteError,
)
from .study import (
    Composition,
    PoolImage,
    SessionStore,
    StudySession,
    create_session,
    next_item,
    score_session,
    submit_rating,
)


class CompositionBody(BaseModel):
    n_real: int = Field(default=96, ge=2)
    n_synthetic: int = Field(default=72, ge=2)


class CreateSessionBody(BaseModel):
    composition: CompositionBody | None = None
    seed: int | None = None


class RatingBody(BaseModel):
    item_id: str
    judgment: str
    latency_ms: int = Field(ge=0)


class StudyService:
    """Session registry bridging the HTTP layer and the study module."""

    def __init__(
        self,
        real_pool: list[PoolImage],
        synthetic_pool: list[PoolImage],
        store: SessionStore,
        default_composition: Composition | None = None,
        default_seed: int = 0,
    ):
        self.real_pool = real_pool
        self.synthetic_pool = synthetic_pool
        self.store = store
        self.default_composition = default_composition or Composition()
        self.default_seed = default_seed
        self.sessions: dict[str, StudySession] = {}

    def validate_pools(self) -> None:
        """Fail fast if the default composition cannot be assembled."""
        create_session(
            self.real_pool,
            self.synthetic_pool,
            self.default_composition,
            seed=self.default_seed,
        )

    def create(self, composition: Composition | None, seed: int | None) -> StudySession:
        session = create_session(
            self.real_pool,
            self.synthetic_pool,
            composition or self.default_composition,
            seed=self.default_seed if seed is None else seed,
        )
        self.store.save_session(session)
        self.sessions[session.session_id] = session
        return session

    def get(self, session_id: str) -> StudySession:
        if session_id not in self.sessions:
            # fall back to the persisted log (e.g. after a server restart)
            self.sessions[session_id] = self.store.load_session(session_id)
        return self.sessions[session_id]

    @staticmethod
    def load_image(image_ref: str) -> bytes:
        path = Path(image_ref)
        if not path.exists():
            raise NotFoundError(f"missing study image: {image_ref}")
        return path.read_bytes()


def create_app(service: StudyService, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="mrtranslate perceptual study")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.service = service

    def _get_session(session_id: str) -> StudySession:
        try:
            return service.get(session_id)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.post("/sessions")
    async def create_session_endpoint(body: CreateSessionBody | None = None):
        body = body or CreateSessionBody()
        try:
            composition = (
                Composition(**body.composition.model_dump()) if body.composition else None
            )
            session = service.create(composition, body.seed)
        except ConfigError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return {"session_id": session.session_id, "total": session.total}

    @app.get("/sessions/{session_id}")
    async def progress_endpoint(session_id: str):
        session = _get_session(session_id)
        return {
            "session_id": session.session_id,
            "rated": len(session.ratings),
            "total": session.total,
            "completed": session.completed,
        }

    @app.get("/sessions/{session_id}/next")
    async def next_endpoint(session_id: str):
        session = _get_session(session_id)
        try:
            payload = next_item(session, load_image=service.load_image)
        except SessionCompleteError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        payload["image_png"] = base64.b64encode(payload["image_png"]).decode("ascii")
        return payload

    @app.post("/sessions/{session_id}/ratings")
    async def rating_endpoint(session_id: str, body: RatingBody):
        session = _get_session(session_id)
        try:
            ack = submit_rating(
                session, body.item_id, body.judgment, body.latency_ms, store=service.store
            )
        except OrderViolationError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except SessionCompleteError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except ConfigError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return ack

    @app.get("/sessions/{session_id}/report")
    async def report_endpoint(session_id: str, partial: bool = False):
        session = _get_session(session_id)
        if not session.completed and not partial:
            raise HTTPException(
                status_code=403,
                detail="session is not complete; pass ?partial=true for an interim report",
            )
        try:
            report = score_session(session)
        except EmptySessionError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        return report.to_dict()

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
