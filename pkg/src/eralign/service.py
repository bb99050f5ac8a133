"""HTTP service hosting the interactive feedback loop.

Session state is event-sourced: every mutation appends to a per-session
JSONL log, and restarting the service replays the logs to identical state
(the learned alignment is verified against its recorded hash).  Adaptation
publishes a new immutable index atomically, so queries never observe a
partially built index.
"""

from __future__ import annotations

import json
import struct
import threading
import uuid
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from .config import ServeConfig
from .corpus import FeatureStore, load_features, load_manifest, load_model
from .data import Domain, FeatureMatrix
from .encode import encode_fv
from .errors import EngineError
from .retrieve import (
    FeedbackRound,
    RetrievalIndex,
    Session,
    SessionLog,
    adapted_index,
    build_index,
    estimate_session_dims,
    map_for_index,
    maybe_learn_alignment,
    model_hash,
    note_query,
    record_feedback,
    replay_session,
)

# 1x1 gray PNG used when a manifest URI has no readable file behind it.
_PLACEHOLDER_PNG = (
    b"\x89PNG\r\n\x1a\n"
    + struct.pack(">I", 13) + b"IHDR"
    + struct.pack(">IIBBBBB", 1, 1, 8, 0, 0, 0, 0)
    + struct.pack(">I", zlib.crc32(b"IHDR" + struct.pack(">IIBBBBB", 1, 1, 8, 0, 0, 0, 0)))
    + struct.pack(">I", 14) + b"IDAT" + zlib.compress(b"\x00\x80", 9)
    + struct.pack(">I", zlib.crc32(b"IDAT" + zlib.compress(b"\x00\x80", 9)))
    + struct.pack(">I", 0) + b"IEND" + struct.pack(">I", zlib.crc32(b"IEND"))
)


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code


@dataclass
class SessionRuntime:
    """Single-writer session state; reads see a consistent snapshot."""

    sid: str
    session: Session
    index: RetrievalIndex
    log: SessionLog
    lock: threading.Lock = field(default_factory=threading.Lock)


class RetrievalService:
    def __init__(self, cfg: ServeConfig):
        self.cfg = cfg
        self.store: FeatureStore = load_features(cfg.store_path)
        self.raw_index = build_index(self.store)
        self.manifest = load_manifest(cfg.manifest_path) if cfg.manifest_path else None
        self.query_store = (load_features(cfg.query_store_path)
                            if cfg.query_store_path else None)
        self.gmm = load_model(cfg.gmm_path) if cfg.gmm_path else None
        self.relevance = None
        self.classes = None
        if cfg.relevance_path:
            data = json.loads(Path(cfg.relevance_path).read_text())
            self.relevance = {q: frozenset(v) for q, v in data["relevance"].items()}
            self.classes = data.get("classes")
        self.sessions: dict[str, SessionRuntime] = {}
        self.sessions_lock = threading.Lock()
        self.sessions_dir = Path(cfg.sessions_dir)
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self._before_map: float | None = None
        self._restore_sessions()

    # -- session lifecycle ---------------------------------------------------

    def _restore_sessions(self) -> None:
        for log_path in sorted(self.sessions_dir.glob("*.jsonl")):
            sid = log_path.stem
            session = replay_session(log_path, self.store, self._resolve_query_vector)
            index = adapted_index(self.raw_index, session) if session.adapted \
                else self.raw_index
            self.sessions[sid] = SessionRuntime(
                sid=sid, session=session, index=index, log=SessionLog(log_path))

    def create_session(self, sid: str | None = None) -> SessionRuntime:
        sid = sid or uuid.uuid4().hex[:12]
        with self.sessions_lock:
            if sid in self.sessions:
                raise ServiceError(409, "SESSION_EXISTS", f"session {sid} exists")
            runtime = SessionRuntime(
                sid=sid, session=Session(archive=self.store), index=self.raw_index,
                log=SessionLog(self.sessions_dir / f"{sid}.jsonl"))
            self.sessions[sid] = runtime
            return runtime

    def runtime(self, sid: str) -> SessionRuntime:
        try:
            return self.sessions[sid]
        except KeyError:
            raise ServiceError(404, "UNKNOWN_SESSION", f"no session {sid}") from None

    # -- vector resolution ----------------------------------------------------

    def _resolve_query_vector(self, image_id: str) -> np.ndarray:
        if self.query_store is None:
            raise ServiceError(400, "NO_QUERY_STORE",
                               "service has no query store to resolve image ids")
        try:
            row = self.query_store.row_index(image_id)
        except EngineError:
            raise ServiceError(404, "UNKNOWN_IMAGE",
                               f"no query image {image_id!r}") from None
        return self.query_store.values[row].astype(np.float64)

    def encode_descriptors(self, descriptors: list[list[float]]) -> np.ndarray:
        if self.gmm is None:
            raise ServiceError(400, "ENCODER_UNAVAILABLE",
                               "service has no encoder model configured")
        matrix = FeatureMatrix.create(np.asarray(descriptors, dtype=np.float64))
        return encode_fv(matrix, self.gmm).values

    # -- views ----------------------------------------------------------------

    def session_view(self, rt: SessionRuntime) -> dict:
        s = rt.session
        history = []
        for rec in s.queries:
            fb = [f for f in s.feedback if f.query_id == rec.query_id]
            history.append({
                "query_id": rec.query_id,
                "feedback_rounds": len(fb),
            })
        return {
            "sid": rt.sid,
            "counters": {"n_s": s.n_s, "n_t": s.n_t},
            "thresholds": {
                "d_hat_s": None if s.d_hat_s is None else s.d_hat_s.rounded,
                "d_hat_t": None if s.d_hat_t is None else s.d_hat_t.rounded,
                "estimated": s.d_hat_s is not None,
            },
            "adapted": s.adapted,
            "round": s.round,
            "seq": rt.log.seq,
            "adapt_error": s.adapt_error,
            "history": history,
        }

    # -- mutations ------------------------------------------------------------

    def query(self, rt: SessionRuntime, body: dict) -> dict:
        k = int(body.get("k", 10))
        if not (1 <= k <= self.cfg.max_k):
            raise ServiceError(400, "K_OUT_OF_RANGE",
                               f"k must lie in [1, {self.cfg.max_k}]")
        mode = body.get("mode", "auto")
        if mode not in ("auto", "raw", "adapted"):
            raise ServiceError(400, "BAD_MODE", "mode must be auto, raw or adapted")
        if "image_id" in body:
            query_id = str(body["image_id"])
            vector = self._resolve_query_vector(query_id)
            payload = {"query_id": query_id}
        elif "descriptors" in body:
            vector = self.encode_descriptors(body["descriptors"])
            query_id = f"upload-{uuid.uuid4().hex[:8]}"
            payload = {"query_id": query_id, "vector": vector.tolist()}
        else:
            raise ServiceError(400, "BAD_REQUEST",
                               "query needs image_id or descriptors")
        from .retrieve import query_topk

        with rt.lock:
            rt.session = note_query(rt.session, query_id, vector)
            rt.log.append("query", payload)
            if mode == "raw":
                index = self.raw_index
            elif mode == "adapted":
                if not rt.session.adapted:
                    raise ServiceError(409, "NOT_ADAPTED",
                                       "session has not adapted yet")
                index = rt.index
            else:
                index = rt.index
        results = query_topk(index, vector, k)
        return {
            "query_id": query_id,
            "mode": index.mode.value,
            "results": [{"id": rid, "score": score, "rank": i + 1}
                        for i, (rid, score) in enumerate(results)],
            "session": self.session_view(rt),
        }

    def feedback(self, rt: SessionRuntime, body: dict) -> dict:
        selected = body.get("selected_ids")
        if not isinstance(selected, list) or len(set(selected)) != self.cfg.feedback_size:
            raise ServiceError(400, "FEEDBACK_SIZE",
                               f"exactly {self.cfg.feedback_size} distinct ids required")
        query_id = str(body.get("query_id", ""))
        with rt.lock:
            try:
                rt.session = record_feedback(
                    rt.session,
                    FeedbackRound(query_id=query_id,
                                  selected_ids=tuple(str(s) for s in selected)))
            except EngineError as exc:
                raise ServiceError(400, exc.code.upper().replace("-", "_"),
                                   str(exc)) from exc
            rt.log.append("feedback", {"query_id": query_id,
                                       "selected_ids": list(selected)})
            adapted_now = self._advance(rt)
        return {"session": self.session_view(rt), "adapted_triggered": adapted_now}

    def _advance(self, rt: SessionRuntime) -> bool:
        """Run estimation and the adaptation trigger; returns True on adapt."""
        s = rt.session
        if s.d_hat_s is None:
            s = estimate_session_dims(s, min_images=self.cfg.min_dim_images,
                                      k_min=self.cfg.mle_k_min,
                                      k_max=self.cfg.mle_k_max)
            if s.d_hat_s is not None:
                rt.log.append("dims", {
                    "min_images": self.cfg.min_dim_images,
                    "d_hat_s": s.d_hat_s.rounded, "d_hat_t": s.d_hat_t.rounded})
            rt.session = s
        if not rt.session.adapted or self.cfg.relearn:
            return self._try_adapt(rt, relearn=rt.session.adapted)
        return False

    def _try_adapt(self, rt: SessionRuntime, relearn: bool = False) -> bool:
        before = rt.session.model
        session = maybe_learn_alignment(rt.session, relearn=relearn)
        if session.model is None or session.model is before:
            rt.session = session
            return False
        new_index = adapted_index(self.raw_index, session)
        # atomic publication: in-flight queries keep the previous index
        rt.session = session
        rt.index = new_index
        rt.log.append("adapted", {"relearn": relearn,
                                  "model_hash": model_hash(session)})
        return True

    def manual_adapt(self, rt: SessionRuntime) -> dict:
        with rt.lock:
            if rt.session.d_hat_s is None:
                rt.session = estimate_session_dims(
                    rt.session, min_images=self.cfg.min_dim_images,
                    k_min=self.cfg.mle_k_min, k_max=self.cfg.mle_k_max)
                if rt.session.d_hat_s is not None:
                    rt.log.append("dims", {
                        "min_images": self.cfg.min_dim_images,
                        "d_hat_s": rt.session.d_hat_s.rounded,
                        "d_hat_t": rt.session.d_hat_t.rounded})
            adapted_now = self._try_adapt(rt, relearn=rt.session.adapted)
        reason = None
        if not adapted_now:
            s = rt.session
            if s.d_hat_s is None:
                reason = "dimensionality estimates not ready"
            elif s.adapt_error:
                reason = s.adapt_error
            else:
                reason = "sample counts below dimensionality thresholds"
        return {"adapted": adapted_now or rt.session.adapted, "reason": reason,
                "session": self.session_view(rt)}

    def metrics(self, rt: SessionRuntime) -> dict:
        if self.relevance is None or self.query_store is None:
            raise ServiceError(400, "NO_ORACLE",
                               "service has no relevance labels configured")
        queries = self.query_store.to_matrix(domain=Domain.TARGET)
        if self._before_map is None:
            self._before_map = map_for_index(self.raw_index, queries,
                                             self.relevance, self.classes)
        after = None
        if rt.session.adapted:
            after = map_for_index(rt.index, queries, self.relevance, self.classes)
        return {"before_map": self._before_map, "after_map": after,
                "adapted": rt.session.adapted}

    def thumb(self, image_id: str) -> bytes:
        known = image_id in self.store._index or (
            self.query_store is not None and image_id in self.query_store._index)
        if self.manifest is not None:
            try:
                entry = self.manifest.entry(image_id)
                known = True
                path = Path(entry.uri)
                if path.is_file():
                    return path.read_bytes()
            except EngineError:
                pass
        if not known:
            raise ServiceError(404, "UNKNOWN_IMAGE", f"no archive image {image_id!r}")
        return _PLACEHOLDER_PNG


def create_app(cfg: ServeConfig) -> FastAPI:
    service = RetrievalService(cfg)
    app = FastAPI(title="eralign retrieval service")
    app.state.service = service

    @app.exception_handler(ServiceError)
    async def _service_error(_request: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status,
                            content={"error": {"code": exc.code,
                                               "message": str(exc)}})

    @app.exception_handler(EngineError)
    async def _engine_error(_request: Request, exc: EngineError):
        return JSONResponse(status_code=400,
                            content={"error": {"code": exc.code.upper().replace("-", "_"),
                                               "message": str(exc)}})

    @app.post("/session")
    async def create_session(body: dict | None = None):
        runtime = service.create_session((body or {}).get("sid"))
        return {"session": service.session_view(runtime)}

    @app.get("/session/{sid}/status")
    async def status(sid: str):
        return service.session_view(service.runtime(sid))

    @app.post("/session/{sid}/query")
    async def query(sid: str, body: dict):
        return service.query(service.runtime(sid), body)

    @app.post("/session/{sid}/feedback")
    async def feedback(sid: str, body: dict):
        return service.feedback(service.runtime(sid), body)

    @app.post("/session/{sid}/adapt")
    async def adapt(sid: str):
        return service.manual_adapt(service.runtime(sid))

    @app.get("/session/{sid}/metrics")
    async def metrics(sid: str):
        return service.metrics(service.runtime(sid))

    @app.get("/archive/{image_id}/thumb")
    async def thumb(image_id: str):
        return Response(content=service.thumb(image_id), media_type="image/png")

    return app
