"""HTTP chat service over the engine, with per-session persistence.

Sessions are held in memory behind per-session locks and evicted after an
idle TTL; the append-only log under the persistence path remains the source
of truth, so an evicted or killed session is rebuilt by replay on next
access. Every error body has the shape {"error": {"code", "message"}}.
"""

from __future__ import annotations

import threading
import time

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .engine import Engine, SessionRuntime
from .tracker import state_view

DEFAULT_TTL_SECONDS = 30 * 60


class _Sessions:
    def __init__(self, engine: Engine, ttl: float):
        self.engine = engine
        self.ttl = ttl
        self._lock = threading.Lock()
        self._live: dict[str, tuple[SessionRuntime, threading.Lock]] = {}

    def create(self) -> SessionRuntime:
        rt = self.engine.create_session()
        with self._lock:
            self._live[rt.session_id] = (rt, threading.Lock())
        return rt

    def acquire(self, session_id: str) -> tuple[SessionRuntime, threading.Lock]:
        with self._lock:
            self._evict_idle()
            if session_id in self._live:
                return self._live[session_id]
        # Not in memory: replay from the store outside the registry lock.
        if self.engine.store is None or not self.engine.store.exists(session_id):
            raise KeyError(session_id)
        rt = self.engine.load_session(session_id)
        with self._lock:
            if session_id not in self._live:
                self._live[session_id] = (rt, threading.Lock())
            return self._live[session_id]

    def _evict_idle(self) -> None:
        if self.engine.store is None:
            return  # nothing on disk to fall back to; keep sessions live
        cutoff = time.time() - self.ttl
        for sid in [s for s, (rt, _) in self._live.items() if rt.last_active < cutoff]:
            del self._live[sid]


def create_app(engine: Engine, ttl: float = DEFAULT_TTL_SECONDS) -> FastAPI:
    app = FastAPI(title="dstkit", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    sessions = _Sessions(engine, ttl)
    app.state.engine = engine
    app.state.sessions = sessions

    def error(status: int, code: str, message: str) -> JSONResponse:
        return JSONResponse(status_code=status,
                            content={"error": {"code": code, "message": message}})

    @app.exception_handler(Exception)
    async def unhandled(request: Request, exc: Exception):
        return error(500, "internal", str(exc))

    @app.exception_handler(404)
    async def not_found(request: Request, exc):
        return error(404, "not_found", "no such resource")

    @app.exception_handler(422)
    async def invalid(request: Request, exc):
        return error(400, "bad_request", str(exc))

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/v1/sessions", status_code=201)
    def create_session():
        rt = sessions.create()
        return {"session_id": rt.session_id}

    @app.post("/v1/sessions/{session_id}/messages")
    def post_message(session_id: str, body: dict):
        text = body.get("text")
        if not isinstance(text, str) or not text.strip():
            return error(400, "bad_request", "body must carry a non-empty 'text'")
        try:
            rt, lock = sessions.acquire(session_id)
        except KeyError:
            return error(404, "unknown_session", f"no session {session_id}")
        with lock:
            outcome = engine.step(rt, text)
        return {
            "reply": outcome.reply,
            "action": outcome.action.kind,
            "verdict": outcome.verdict.label,
            "result": outcome.result.to_dict() if outcome.result else None,
        }

    @app.get("/v1/sessions/{session_id}/state")
    def get_state(session_id: str):
        try:
            rt, lock = sessions.acquire(session_id)
        except KeyError:
            return error(404, "unknown_session", f"no session {session_id}")
        with lock:
            return state_view(rt.state, engine.ontology)

    @app.get("/v1/sessions/{session_id}/transcript")
    def get_transcript(session_id: str):
        try:
            rt, lock = sessions.acquire(session_id)
        except KeyError:
            return error(404, "unknown_session", f"no session {session_id}")
        with lock:
            return {"session_id": session_id, "transcript": list(rt.transcript)}

    return app
