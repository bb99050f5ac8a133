"""Cross-domain retrieval index and the interactive feedback loop.

A session accumulates target-domain queries and user-selected relevant
archive images (three per query).  Once both domains hold enough distinct
samples, their intrinsic dimensionalities are estimated; at the first
round where the sample counts exceed those estimates, a subspace alignment
is learned and the whole archive is mapped into a whitened target-space
index.  All session values are immutable; every transition returns a new
session, so feedback logs replay to bit-identical models.
"""

from __future__ import annotations

import hashlib
import json
import time
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .adapt import SaModel, learn_sa, map_source, map_target
from .corpus import FeatureStore
from .data import FeatureMatrix
from .encode import whiten_rows
from .errors import (
    AdaptationFailedError,
    DegenerateSpectrumError,
    EngineError,
    InsufficientDataError,
    InvalidFeedbackError,
    InvalidInputError,
    NotReadyError,
)
from .evaluate import mean_average_precision
from .subspace import DimEstimate, estimate_dim_mle, fit_pca
from .util import l2_normalize_rows, make_rng

FEEDBACK_SIZE = 3
MIN_DIM_IMAGES = 15
WHITEN_EIGENVALUE_FLOOR = 1e-8


class IndexMode(Enum):
    RAW = "raw"
    ADAPTED = "adapted"


@dataclass(frozen=True)
class RetrievalIndex:
    """Flat-scan index; raw mode over normalized vectors, adapted mode over
    whitened target-space projections (float32 payload)."""

    ids: tuple[str, ...]
    flags: np.ndarray
    ambient_dim: int
    mode: IndexMode
    vectors: np.ndarray | None = None            # raw mode payload
    adapted_vectors: np.ndarray | None = None    # adapted mode payload
    model: SaModel | None = None
    whitening_eigenvalues: np.ndarray | None = None
    _norms: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.mode is IndexMode.RAW:
            if self.vectors is None:
                raise InvalidInputError("raw index needs vectors")
            payload = self.vectors
        else:
            if self.adapted_vectors is None or self.model is None \
                    or self.whitening_eigenvalues is None:
                raise InvalidInputError(
                    "adapted index needs vectors, model and whitening eigenvalues")
            if self.adapted_vectors.shape[1] != self.model.target.dim \
                    or self.whitening_eigenvalues.shape[0] != self.model.target.dim:
                raise InvalidInputError("adapted payload dimensions disagree")
            payload = self.adapted_vectors
        if payload.shape[0] != len(self.ids):
            raise InvalidInputError("payload row count must match ids")
        norms = np.sum(payload.astype(np.float64) ** 2, axis=1)
        object.__setattr__(self, "_norms", norms)

    @property
    def n(self) -> int:
        return len(self.ids)

    def payload_bytes(self) -> int:
        payload = self.vectors if self.mode is IndexMode.RAW else self.adapted_vectors
        return int(payload.nbytes)


def build_index(store: FeatureStore) -> RetrievalIndex:
    """Raw-mode flat index over L2-normalized archive vectors."""
    if store.n == 0:
        raise InvalidInputError("empty store")
    vectors = l2_normalize_rows(store.values.astype(np.float64)).astype(np.float32)
    return RetrievalIndex(ids=store.ids, flags=store.flags, ambient_dim=store.dim,
                          mode=IndexMode.RAW, vectors=vectors)


def map_archive_rows(model: SaModel, whitening: np.ndarray,
                     rows: np.ndarray) -> np.ndarray:
    """Canonical archive mapping: normalize, align via X_a, whiten, float32.

    Whitening here rescales coordinates only; re-normalizing the projected
    rows would blow up archive items nearly orthogonal to the learned
    subspace (distractors) into arbitrary unit directions.  Both the eager
    (index build) and lazy (per query) paths use this exact function so
    their scores agree bitwise.
    """
    normalized = l2_normalize_rows(np.asarray(rows, dtype=np.float64))
    return (map_source(model, normalized) / np.sqrt(whitening)).astype(np.float32)


def map_query_vector(model: SaModel, whitening: np.ndarray, q: np.ndarray) -> np.ndarray:
    normalized = l2_normalize_rows(np.asarray(q, dtype=np.float64))
    return (map_target(model, normalized) / np.sqrt(whitening)).astype(np.float32)


def _rank(payload: np.ndarray, norms: np.ndarray, ids: tuple[str, ...],
          qv: np.ndarray, k: int,
          inner_product: bool = False) -> list[tuple[str, float]]:
    """Top-k with deterministic (score, id) tie-breaking.

    The scan runs in the payload dtype for speed; the surviving candidates
    are rescored in float64 so returned scores are exact (a duplicate of an
    archive vector really scores 0).
    """
    qv64 = qv.astype(np.float64)
    dots = payload @ qv
    if inner_product:
        scores = -dots.astype(np.float64)
    else:
        sq = norms - 2.0 * dots.astype(np.float64) + float(qv64 @ qv64)
        scores = np.sqrt(np.maximum(sq, 0.0))
    m = min(k, scores.shape[0])
    part = np.argpartition(scores, m - 1)[:m]
    threshold = scores[part].max()
    cand = np.flatnonzero(scores <= threshold * (1.0 + 1e-6) + 1e-12)
    rows = payload[cand].astype(np.float64)
    if inner_product:
        exact = -(rows @ qv64)
    else:
        exact = np.linalg.norm(rows - qv64[None, :], axis=1)
    order = sorted(range(cand.shape[0]),
                   key=lambda i: (exact[i], ids[cand[i]]))[:m]
    sign = -1.0 if inner_product else 1.0
    return [(ids[cand[i]], float(sign * exact[i])) for i in order]


def query_topk(index: RetrievalIndex, q: np.ndarray, k: int,
               scoring: str = "euclidean") -> list[tuple[str, float]]:
    """Ranked (id, score) list; k larger than the index truncates silently.

    Raw mode ranks by Euclidean distance over normalized vectors (or by
    inner product when requested; identical ordering for unit vectors).
    Adapted mode ranks by the aligned-and-whitened target-space distance.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 1 or q.shape[0] != index.ambient_dim:
        raise InvalidInputError(
            f"query dimension {q.shape} does not match archive {index.ambient_dim}")
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    if index.mode is IndexMode.RAW:
        qv = l2_normalize_rows(q).astype(np.float32)
        return _rank(index.vectors, index._norms, index.ids, qv, k,
                     inner_product=scoring == "inner_product")
    if scoring != "euclidean":
        raise InvalidInputError("adapted mode ranks by euclidean distance only")
    qv = map_query_vector(index.model, index.whitening_eigenvalues, q)
    return _rank(index.adapted_vectors, index._norms, index.ids, qv, k)


@dataclass(frozen=True)
class QueryRecord:
    query_id: str
    vector: np.ndarray

    def __post_init__(self):
        v = l2_normalize_rows(np.asarray(self.vector, dtype=np.float64)).copy()
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)


@dataclass(frozen=True)
class FeedbackRound:
    query_id: str
    selected_ids: tuple[str, str, str]
    round: int = 0


@dataclass(frozen=True)
class Session:
    """Interactive retrieval state: accumulated queries, feedback, and the
    alignment learned once both domains pass their dimensionality gates."""

    archive: FeatureStore
    queries: tuple[QueryRecord, ...] = ()
    feedback: tuple[FeedbackRound, ...] = ()
    d_hat_s: DimEstimate | None = None
    d_hat_t: DimEstimate | None = None
    model: SaModel | None = None
    whitening_eigenvalues: np.ndarray | None = None
    adapt_round: int | None = None
    adapt_error: str | None = None

    @property
    def n_t(self) -> int:
        return len(self.queries)

    @property
    def n_s(self) -> int:
        return len(self.collected_source_ids())

    @property
    def round(self) -> int:
        return len(self.feedback)

    @property
    def adapted(self) -> bool:
        return self.model is not None

    def collected_source_ids(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for fb in self.feedback:
            for sid in fb.selected_ids:
                seen.setdefault(sid, None)
        return tuple(seen)

    def query_vector(self, query_id: str) -> np.ndarray:
        for rec in self.queries:
            if rec.query_id == query_id:
                return rec.vector
        raise InvalidInputError(f"query {query_id!r} was not issued in this session")

    def source_vectors(self) -> np.ndarray:
        ids = self.collected_source_ids()
        rows = self.archive.values[[self.archive.row_index(i) for i in ids]]
        return l2_normalize_rows(rows.astype(np.float64))

    def target_vectors(self) -> np.ndarray:
        return np.vstack([rec.vector for rec in self.queries])


def note_query(s: Session, query_id: str, vector: np.ndarray) -> Session:
    """Accumulate a distinct query; repeats of a known id are no-ops."""
    for rec in s.queries:
        if rec.query_id == query_id:
            return s
    if np.asarray(vector).shape[-1] != s.archive.dim:
        raise InvalidInputError("query vector dimension does not match archive")
    return replace(s, queries=s.queries + (QueryRecord(query_id, vector),))


def record_feedback(s: Session, fb: FeedbackRound) -> Session:
    """Append one feedback round (exactly three distinct archive ids)."""
    ids = tuple(fb.selected_ids)
    if len(ids) != FEEDBACK_SIZE or len(set(ids)) != FEEDBACK_SIZE:
        raise InvalidFeedbackError(
            f"feedback must name exactly {FEEDBACK_SIZE} distinct archive images")
    for sid in ids:
        s.archive.row_index(sid)  # raises for unknown ids
    s.query_vector(fb.query_id)   # raises for unknown queries
    stamped = FeedbackRound(query_id=fb.query_id, selected_ids=ids,
                            round=s.round + 1)
    return replace(s, feedback=s.feedback + (stamped,))


def estimate_session_dims(
    s: Session,
    min_images: int = MIN_DIM_IMAGES,
    k_min: int = 6,
    k_max: int = 12,
) -> Session:
    """Per-domain MLE dimensionalities once both sides have enough images.

    Returns the session unchanged while either domain is short (non-fatal
    not-ready state).
    """
    if s.n_s < min_images or s.n_t < min_images:
        return s
    d_s = estimate_dim_mle(FeatureMatrix.create(s.source_vectors()), k_min, k_max)
    d_t = estimate_dim_mle(FeatureMatrix.create(s.target_vectors()), k_min, k_max)
    return replace(s, d_hat_s=d_s, d_hat_t=d_t)


def _floored_whitening(eigenvalues: np.ndarray) -> np.ndarray:
    top = float(np.max(eigenvalues))
    if top <= 0.0:
        raise DegenerateSpectrumError("target spectrum is all-zero")
    return np.maximum(eigenvalues, WHITEN_EIGENVALUE_FLOOR * top)


def maybe_learn_alignment(s: Session, relearn: bool = False) -> Session:
    """Learn the alignment at the first round satisfying both gates.

    Requires n_s > d_hat_s and n_t > d_hat_t (rounded estimates); otherwise
    the session is returned unchanged.  A degenerate PCA marks the session
    with adapt_error and leaves it usable in raw mode.
    """
    if s.model is not None and not relearn:
        return s
    if s.d_hat_s is None or s.d_hat_t is None:
        return s
    d_s = min(s.d_hat_s.rounded, s.archive.dim)
    d_t = min(s.d_hat_t.rounded, s.archive.dim)
    if not (s.n_s > d_s and s.n_t > d_t):
        return s
    try:
        source_sub = fit_pca(FeatureMatrix.create(s.source_vectors()), d_s)
        target_sub = fit_pca(FeatureMatrix.create(s.target_vectors()), d_t)
        model = learn_sa(source_sub, target_sub)
        whitening = _floored_whitening(target_sub.eigenvalues)
    except (DegenerateSpectrumError, InsufficientDataError) as exc:
        return replace(s, adapt_error=f"adaptation-failed: {exc}")
    return replace(s, model=model, whitening_eigenvalues=whitening,
                   adapt_round=s.round, adapt_error=None)


def adapted_index(index: RetrievalIndex, s: Session) -> RetrievalIndex:
    """Map the full archive through the session model into an adapted index."""
    if s.model is None or s.whitening_eigenvalues is None:
        raise AdaptationFailedError("session has no learned alignment")
    mapped = map_archive_rows(s.model, s.whitening_eigenvalues,
                              s.archive.values)
    return RetrievalIndex(
        ids=index.ids, flags=index.flags, ambient_dim=index.ambient_dim,
        mode=IndexMode.ADAPTED, adapted_vectors=mapped, model=s.model,
        whitening_eigenvalues=s.whitening_eigenvalues)


def model_hash(s: Session) -> str:
    if s.model is None:
        raise AdaptationFailedError("session has no learned alignment")
    digest = hashlib.sha256()
    digest.update(s.model.m.tobytes())
    digest.update(s.model.x_a.tobytes())
    digest.update(s.whitening_eigenvalues.tobytes())
    return digest.hexdigest()


def baseline_neighbor_query(s: Session, q: np.ndarray, k: int) -> list[tuple[str, float]]:
    """Neighbor baseline: nearest accumulated query, probe from its feedback.

    Finds the accumulated historical query closest to q, averages that
    query's feedback vectors into a probe, and ranks the archive by
    distance to the probe.
    """
    with_feedback = {fb.query_id for fb in s.feedback}
    if not with_feedback:
        raise NotReadyError("no feedback recorded yet")
    qn = l2_normalize_rows(np.asarray(q, dtype=np.float64))
    recs = [rec for rec in s.queries if rec.query_id in with_feedback]
    dists = [(float(np.linalg.norm(rec.vector - qn)), rec.query_id) for rec in recs]
    _, nearest_qid = min(dists)
    probe = _feedback_probe(s, nearest_qid)
    payload = l2_normalize_rows(s.archive.values.astype(np.float64)).astype(np.float32)
    norms = np.sum(payload.astype(np.float64) ** 2, axis=1)
    return _rank(payload, norms, s.archive.ids, probe.astype(np.float32), k)


def _feedback_probe(s: Session, query_id: str) -> np.ndarray:
    ids: dict[str, None] = {}
    for fb in s.feedback:
        if fb.query_id == query_id:
            for sid in fb.selected_ids:
                ids.setdefault(sid, None)
    rows = s.archive.values[[s.archive.row_index(i) for i in ids]]
    return l2_normalize_rows(rows.astype(np.float64)).mean(axis=0)


# --- session event log -----------------------------------------------------


class SessionLog:
    """Append-only JSONL event log making any session replayable."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._seq = 0
        if self.path.exists():
            with self.path.open("r", encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        self._seq = json.loads(line)["seq"]

    @property
    def seq(self) -> int:
        return self._seq

    def append(self, event_type: str, payload: dict) -> int:
        self._seq += 1
        record = {"seq": self._seq, "type": event_type,
                  "ts": time.time(), "payload": payload}
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
        return self._seq

    def events(self) -> list[dict]:
        if not self.path.exists():
            return []
        out = []
        with self.path.open("r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    out.append(json.loads(line))
        return out


def replay_session(log_path: str | Path, archive: FeatureStore,
                   query_resolver: Callable[[str], np.ndarray] | None = None) -> Session:
    """Rebuild a session by re-applying its event log.

    Query events either embed the vector or reference an id resolvable via
    `query_resolver`; adaptation events carry the model hash, which the
    replayed model must reproduce exactly.
    """
    s = Session(archive=archive)
    for event in SessionLog(log_path).events():
        payload = event["payload"]
        kind = event["type"]
        if kind == "query":
            if "vector" in payload:
                vec = np.asarray(payload["vector"], dtype=np.float64)
            elif query_resolver is not None:
                vec = query_resolver(payload["query_id"])
            else:
                raise InvalidInputError("query event lacks vector and resolver")
            s = note_query(s, payload["query_id"], vec)
        elif kind == "feedback":
            s = record_feedback(s, FeedbackRound(
                query_id=payload["query_id"],
                selected_ids=tuple(payload["selected_ids"])))
        elif kind == "dims":
            s = estimate_session_dims(s, min_images=payload.get(
                "min_images", MIN_DIM_IMAGES))
        elif kind == "adapted":
            s = maybe_learn_alignment(s, relearn=payload.get("relearn", False))
            if s.model is None:
                raise AdaptationFailedError("replayed adaptation did not trigger")
            got = model_hash(s)
            want = payload.get("model_hash")
            if want is not None and got != want:
                raise EngineError(
                    f"replayed model hash {got[:12]} != logged {want[:12]}")
        else:
            raise InvalidInputError(f"unknown session event type {kind!r}")
    return s


# --- simulated interactive sessions ----------------------------------------


@dataclass(frozen=True)
class SessionReport:
    """Aggregate outcome of repeated simulated feedback sessions."""

    before_map: float
    after_maps: tuple[float, ...]
    baseline_maps: tuple[float, ...]
    trigger_rounds: tuple[int, ...]
    curves: tuple[tuple[tuple[int, float], ...], ...]
    repetitions: int

    @property
    def after_mean(self) -> float:
        return float(np.mean(self.after_maps))

    @property
    def after_std(self) -> float:
        return float(np.std(self.after_maps))

    @property
    def baseline_mean(self) -> float:
        return float(np.mean(self.baseline_maps))

    @property
    def baseline_std(self) -> float:
        return float(np.std(self.baseline_maps))

    def to_dict(self) -> dict:
        return {
            "before_map": self.before_map,
            "after_map_mean": self.after_mean,
            "after_map_std": self.after_std,
            "baseline_map_mean": self.baseline_mean,
            "baseline_map_std": self.baseline_std,
            "trigger_rounds": list(self.trigger_rounds),
            "repetitions": self.repetitions,
            "curves": [[[r, m] for r, m in curve] for curve in self.curves],
        }


def index_rankings(index: RetrievalIndex, queries: FeatureMatrix) -> dict[str, list[str]]:
    """Full-archive rankings for a batch of queries under one index."""
    rows = np.asarray(queries.rows, dtype=np.float64)
    if index.mode is IndexMode.RAW:
        mapped = l2_normalize_rows(rows).astype(np.float32)
        payload = index.vectors
    else:
        mapped = np.vstack([
            map_query_vector(index.model, index.whitening_eigenvalues, r)
            for r in rows])
        payload = index.adapted_vectors
    sq = (
        index._norms[None, :]
        - 2.0 * (mapped @ payload.T).astype(np.float64)
        + np.sum(mapped.astype(np.float64) ** 2, axis=1)[:, None]
    )
    order = np.argsort(sq, axis=1, kind="stable")
    return {qid: [index.ids[j] for j in order[i]]
            for i, qid in enumerate(queries.ids)}


def map_for_index(index: RetrievalIndex, queries: FeatureMatrix,
                  relevance: Mapping[str, frozenset], classes: Mapping[str, str]) -> float:
    return mean_average_precision(index_rankings(index, queries), relevance, classes)


def cooperative_selection(
    results: Sequence[tuple[str, float]],
    relevant: frozenset,
    rng: np.random.Generator,
    error_rate: float,
    all_ids: tuple[str, ...],
) -> tuple[str, str, str]:
    """Pick the top three relevant results, mimicking a cooperative user.

    Falls back to canonical relevant ids when fewer than three appear in
    the list; with error_rate > 0 each pick may be replaced by a random
    non-relevant archive image.
    """
    picks = [rid for rid, _ in results if rid in relevant][:FEEDBACK_SIZE]
    for rid in sorted(relevant):
        if len(picks) == FEEDBACK_SIZE:
            break
        if rid not in picks:
            picks.append(rid)
    if error_rate > 0.0:
        out = []
        for rid in picks:
            if rng.random() < error_rate:
                while True:
                    wrong = all_ids[int(rng.integers(len(all_ids)))]
                    if wrong not in relevant and wrong not in out:
                        break
                out.append(wrong)
            else:
                out.append(rid)
        if len(set(out)) == FEEDBACK_SIZE:
            picks = out
    return tuple(picks)


def simulate_session(
    corpus,
    query_schedule: Sequence[str] | None = None,
    seed: int = 0,
    repetitions: int = 10,
    k: int = 50,
    min_dim_images: int = MIN_DIM_IMAGES,
    curve_every: int = 5,
    relearn_every: int | None = None,
    oracle_error_rate: float = 0.0,
) -> SessionReport:
    """Replay scheduled queries with a simulated user and report mAP.

    Per repetition the schedule is reshuffled; the cooperative oracle
    selects three relevant images per query, and dimension estimation and
    the adaptation trigger run exactly as in the interactive path.  When
    the schedule covers only part of the query corpus, all mAP figures
    (pre, post, baseline, curve) are computed over the held-out queries,
    measuring how well accumulated feedback serves unseen queries.
    """
    raw = build_index(corpus.archive)
    schedule = list(query_schedule) if query_schedule is not None \
        else list(corpus.queries.ids)
    held_out = [q for q in corpus.queries.ids if q not in set(schedule)]
    eval_ids = held_out if held_out else list(corpus.queries.ids)
    eval_queries = corpus.queries.take(
        [corpus.queries.ids.index(q) for q in eval_ids])
    before = map_for_index(raw, eval_queries, corpus.relevance, corpus.classes)

    after_maps, baseline_maps, trigger_rounds, curves = [], [], [], []
    for rep in range(repetitions):
        rng = make_rng(seed * 100_003 + rep)
        order = [schedule[i] for i in rng.permutation(len(schedule))]
        session = Session(archive=corpus.archive)
        index = raw
        curve: list[tuple[int, float]] = []
        trigger = -1
        for step, qid in enumerate(order, start=1):
            relevant = corpus.relevance.get(qid, frozenset())
            if len(relevant) < FEEDBACK_SIZE:
                warnings.warn(f"query {qid!r} has fewer than 3 relevant items; skipped")
                continue
            qvec = corpus.queries.row_of(qid)
            results = query_topk(index, qvec, k)
            session = note_query(session, qid, qvec)
            picks = cooperative_selection(results, relevant, rng,
                                          oracle_error_rate, corpus.archive.ids)
            session = record_feedback(session, FeedbackRound(qid, picks))
            if session.d_hat_s is None:
                session = estimate_session_dims(session, min_images=min_dim_images)
            if session.model is None:
                session = maybe_learn_alignment(session)
                if session.model is not None:
                    trigger = session.round
                    index = adapted_index(raw, session)
            elif relearn_every and (session.round - session.adapt_round) >= relearn_every:
                session = estimate_session_dims(session, min_images=min_dim_images)
                session = maybe_learn_alignment(session, relearn=True)
                index = adapted_index(raw, session)
            if step % curve_every == 0 or step == len(order):
                curve.append((step, map_for_index(
                    index, eval_queries, corpus.relevance, corpus.classes)))
        after_maps.append(map_for_index(index, eval_queries,
                                        corpus.relevance, corpus.classes))
        baseline_maps.append(_baseline_map(session, corpus, eval_queries))
        trigger_rounds.append(trigger)
        curves.append(tuple(curve))
    return SessionReport(
        before_map=before,
        after_maps=tuple(after_maps),
        baseline_maps=tuple(baseline_maps),
        trigger_rounds=tuple(trigger_rounds),
        curves=tuple(curves),
        repetitions=repetitions,
    )


def _baseline_map(session: Session, corpus, eval_queries: FeatureMatrix) -> float:
    """mAP of the neighbor baseline over the evaluation queries."""
    with_feedback = {fb.query_id for fb in session.feedback}
    if not with_feedback:
        return 0.0
    recs = [rec for rec in session.queries if rec.query_id in with_feedback]
    hist = np.vstack([rec.vector for rec in recs])
    rows = l2_normalize_rows(np.asarray(eval_queries.rows, np.float64))
    nearest = np.argmin(
        np.sum(rows * rows, axis=1)[:, None]
        - 2.0 * rows @ hist.T
        + np.sum(hist * hist, axis=1)[None, :], axis=1)
    probes = np.vstack([_feedback_probe(session, recs[j].query_id) for j in nearest])
    payload = l2_normalize_rows(corpus.archive.values.astype(np.float64))
    sq = (
        np.sum(payload * payload, axis=1)[None, :]
        - 2.0 * probes @ payload.T
        + np.sum(probes * probes, axis=1)[:, None]
    )
    order = np.argsort(sq, axis=1, kind="stable")
    rankings = {qid: [corpus.archive.ids[j] for j in order[i]]
                for i, qid in enumerate(eval_queries.ids)}
    return mean_average_precision(rankings, corpus.relevance, corpus.classes)
