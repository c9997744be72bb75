"""Interactive mock-interview sessions behind an HTTP API.

Sessions are in-memory (optionally mirrored to an append-only log file per
session). Model parameters are immutable while serving; each session
serializes its own mutations behind a lock, so distinct sessions can run
concurrently without observing each other.
"""
from __future__ import annotations

import itertools
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .corpus import DialogTurn, Resume, tokenize, truncate_dialog
from .manager import DecodeConfig
from .model import AblationFlags, GenerationResult, InterviewModel
from .synthetic import GREETING_TOKENS


class SessionError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


@dataclass
class Session:
    id: str
    resume_id: str
    jd_id: str
    transcript: list[DialogTurn] = field(default_factory=list)
    traces: list[dict] = field(default_factory=list)
    created_at: float = field(default_factory=time.time)
    status: str = "active"
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def transcript_payload(self) -> list[dict]:
        return [{"speaker": t.speaker, "tokens": t.tokens} for t in self.transcript]


class InterviewEngine:
    """Session bookkeeping on top of a frozen model."""

    def __init__(
        self,
        model: InterviewModel,
        resumes: dict[str, Resume],
        jds: dict[str, object],
        checkpoint_hash: str,
        decode: DecodeConfig | None = None,
        log_dir: Path | None = None,
    ):
        self.model = model
        self.resumes = resumes
        self.jds = jds
        self.checkpoint_hash = checkpoint_hash
        self.decode = decode or DecodeConfig()
        self.log_dir = Path(log_dir) if log_dir else None
        self.flags = AblationFlags()
        self.sessions: dict[str, Session] = {}
        self._store_lock = threading.Lock()
        self._ids = itertools.count(1)

    # -- helpers ---------------------------------------------------------------

    def _context_for(self, session: Session) -> list[DialogTurn]:
        opening = DialogTurn("interviewer", list(GREETING_TOKENS))
        return truncate_dialog([opening] + session.transcript)

    def _generate(self, session: Session) -> GenerationResult:
        resume = self.resumes[session.resume_id]
        return self.model.generate(self._context_for(session), resume, self.decode, self.flags)

    def _log(self, session: Session, event: dict) -> None:
        if self.log_dir is None:
            return
        self.log_dir.mkdir(parents=True, exist_ok=True)
        with (self.log_dir / f"{session.id}.jsonl").open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    # -- operations -------------------------------------------------------------

    def create_session(self, resume_id: str, jd_id: str) -> tuple[Session, dict]:
        if resume_id not in self.resumes:
            raise SessionError(404, f"unknown resume_id {resume_id!r}")
        if jd_id not in self.jds:
            raise SessionError(404, f"unknown jd_id {jd_id!r}")
        with self._store_lock:
            sid = f"s{next(self._ids):06d}"
            session = Session(id=sid, resume_id=resume_id, jd_id=jd_id)
            self.sessions[sid] = session
        with session.lock:
            result = self._generate(session)
            session.transcript.append(DialogTurn("interviewer", result.tokens))
            session.traces.append(result.trace)
            self._log(session, {"event": "created", "question": result.tokens})
            return session, result.trace

    def get_session(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise SessionError(404, f"unknown session {session_id!r}")
        return session

    def submit_answer(self, session_id: str, text: str) -> tuple[Session, list[str], dict]:
        session = self.get_session(session_id)
        if session.status != "active":
            raise SessionError(409, f"session {session_id!r} is closed")
        try:
            tokens = tokenize(text)[:200]
        except ValueError:
            raise SessionError(422, "answer must not be empty")
        with session.lock:
            session.transcript.append(DialogTurn("candidate", tokens))
            result = self._generate(session)
            session.transcript.append(DialogTurn("interviewer", result.tokens))
            session.traces.append(result.trace)
            self._log(session, {"event": "answer", "answer": tokens, "question": result.tokens})
            return session, result.tokens, result.trace

    def get_trace(self, session_id: str, turn_index: int) -> dict:
        session = self.get_session(session_id)
        if not 0 <= turn_index < len(session.transcript):
            raise SessionError(404, f"turn {turn_index} out of range")
        if session.transcript[turn_index].speaker != "interviewer":
            raise SessionError(404, f"turn {turn_index} is not an interviewer turn")
        return session.traces[turn_index // 2]


class CreateSessionRequest(BaseModel):
    resume_id: str | None = None
    jd_id: str | None = None
    resume: dict | None = None
    jd: dict | None = None


class AnswerRequest(BaseModel):
    text: str


def create_app(engine: InterviewEngine) -> FastAPI:
    app = FastAPI(title="interviewgen", version="0.1.0")

    def _fail(exc: SessionError):
        raise HTTPException(status_code=exc.status, detail=exc.message)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "checkpoint_hash": engine.checkpoint_hash}

    @app.get("/corpus/resumes")
    def list_resumes():
        items = []
        for r in engine.resumes.values():
            summary = {f.key: " ".join(f.value) for f in r.fields if f.part == "basic"}
            items.append({"id": r.id, "basic": summary})
        return {"resumes": items, "checkpoint_hash": engine.checkpoint_hash}

    @app.get("/corpus/jds")
    def list_jds():
        return {
            "jds": [{"id": j.id, "tokens": j.tokens} for j in engine.jds.values()],
            "checkpoint_hash": engine.checkpoint_hash,
        }

    @app.post("/sessions", status_code=201)
    def create_session(req: CreateSessionRequest):
        try:
            resume_id = req.resume_id
            jd_id = req.jd_id
            if req.resume is not None:
                from .corpus import resume_from_record

                inline = resume_from_record(req.resume)
                engine.resumes.setdefault(inline.id, inline)
                resume_id = inline.id
            if req.jd is not None:
                from .corpus import jd_from_record

                inline_jd = jd_from_record(req.jd)
                engine.jds.setdefault(inline_jd.id, inline_jd)
                jd_id = inline_jd.id
            if resume_id is None or jd_id is None:
                raise SessionError(422, "need resume_id|resume and jd_id|jd")
            session, trace = engine.create_session(resume_id, jd_id)
        except SessionError as exc:
            _fail(exc)
        return {
            "session_id": session.id,
            "question": session.transcript[-1].tokens,
            "trace_ref": f"/sessions/{session.id}/traces/0",
            "checkpoint_hash": engine.checkpoint_hash,
        }

    @app.post("/sessions/{session_id}/answers")
    def submit_answer(session_id: str, req: AnswerRequest):
        try:
            session, question, trace = engine.submit_answer(session_id, req.text)
        except SessionError as exc:
            _fail(exc)
        turn = len(session.transcript) - 1
        return {
            "question": question,
            "trace_ref": f"/sessions/{session_id}/traces/{turn}",
            "checkpoint_hash": engine.checkpoint_hash,
        }

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        try:
            session = engine.get_session(session_id)
        except SessionError as exc:
            _fail(exc)
        return {
            "session_id": session.id,
            "resume_id": session.resume_id,
            "jd_id": session.jd_id,
            "status": session.status,
            "transcript": session.transcript_payload(),
            "checkpoint_hash": engine.checkpoint_hash,
        }

    @app.get("/sessions/{session_id}/traces/{turn_index}")
    def get_trace(session_id: str, turn_index: int):
        try:
            trace = engine.get_trace(session_id, turn_index)
        except SessionError as exc:
            _fail(exc)
        return {"trace": trace, "checkpoint_hash": engine.checkpoint_hash}

    ui_dir = Path(__file__).resolve().parent.parent.parent / "frontend" / "dist"
    if ui_dir.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def engine_from_checkpoint(
    checkpoint_path: str, data_dir: str, decode: DecodeConfig | None = None,
    log_dir: Path | None = None,
) -> InterviewEngine:
    from .model import load_checkpoint, read_checkpoint_header
    from .synthetic import load_bundle

    model, header = load_checkpoint(checkpoint_path)
    bundle = load_bundle(Path(data_dir))
    return InterviewEngine(
        model,
        bundle.resume_by_id(),
        bundle.jd_by_id(),
        checkpoint_hash=header["checkpoint_hash"],
        decode=decode,
        log_dir=log_dir,
    )
