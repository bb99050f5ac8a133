"""Nearest-neighbor classification, the one-vs-all training protocols, and
retrieval metrics (average precision, class-mean mAP)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .adapt import (
    GfkModel,
    SaModel,
    esa_distance_matrix,
    gfk_similarity_matrix,
    learn_gfk,
    learn_sa,
    sa_similarity_matrix,
    select_dim_sdm,
)
from .data import FeatureMatrix
from .errors import (
    InsufficientDataError,
    InvalidInputError,
    MissingLabelsError,
    MissingModelError,
)
from .subspace import DimMethod, estimate_dim_eig, estimate_dim_mle, fit_pca
from .util import make_rng


class Metric(Enum):
    """Scoring rule; `ascending` means lower scores are better."""

    EUCLIDEAN = ("euclidean", True)
    SA_SIM = ("sa", False)
    ESA_DIST = ("esa", True)
    GFK_SIM = ("gfk", False)

    def __init__(self, key: str, ascending: bool):
        self.key = key
        self.ascending = ascending

    @classmethod
    def from_key(cls, key: str) -> "Metric":
        for m in cls:
            if m.key == key:
                return m
        raise InvalidInputError(f"unknown metric {key!r}")


@dataclass(frozen=True)
class Prediction:
    sample_id: str
    predicted_label: str
    nearest_source_id: str
    score: float


@dataclass(frozen=True)
class ProtocolResult:
    mean_accuracy: float
    std_dev: float
    repetitions: int
    per_class_accuracy: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 <= self.mean_accuracy <= 100.0) or self.std_dev < 0.0:
            raise InvalidInputError("accuracy must be a percentage, std >= 0")
        if self.repetitions < 1:
            raise InvalidInputError("repetitions must be >= 1")


@dataclass(frozen=True)
class AdaptPlan:
    """How to learn the alignment used by an adaptive metric.

    Dimensions may be fixed explicitly or estimated (MLE per domain for
    SA/ESA, SDM or MLE for GFK).  Subspaces are always learned from all
    available source and target samples; label subsampling never touches
    the subspace estimation.
    """

    method: str                    # "sa" | "esa" | "gfk"
    d_source: int | None = None
    d_target: int | None = None
    dim_method: DimMethod | None = DimMethod.MLE
    energy: float = 0.99
    gfk_use_sdm: bool = True
    d_cap: int = 256

    @property
    def metric(self) -> Metric:
        return {"sa": Metric.SA_SIM, "esa": Metric.ESA_DIST,
                "gfk": Metric.GFK_SIM}[self.method]


def _estimate_dim(data: FeatureMatrix, plan: AdaptPlan) -> int:
    cap = min(plan.d_cap, data.n - 1, data.dim)
    if plan.dim_method is DimMethod.EIG:
        space = fit_pca(data, cap)
        return min(estimate_dim_eig(space.eigenvalues, plan.energy).rounded, cap)
    est = estimate_dim_mle(data)
    return int(np.clip(est.rounded, 1, cap))


def learn_alignment(source: FeatureMatrix, target: FeatureMatrix,
                    plan: AdaptPlan) -> SaModel | GfkModel:
    """Learn the model an AdaptPlan describes from full unlabeled data."""
    if source.dim != target.dim:
        raise InvalidInputError("source/target feature dimensions differ")
    if plan.method == "gfk":
        if plan.d_source is not None:
            d = plan.d_source
        elif plan.gfk_use_sdm:
            d = select_dim_sdm(source, target, plan.d_cap)
        else:
            d = min(_estimate_dim(source, plan), _estimate_dim(target, plan))
        d = int(min(d, source.dim // 2, source.n - 1, target.n - 1))
        return learn_gfk(fit_pca(source, d), fit_pca(target, d), d)
    d_s = plan.d_source if plan.d_source is not None else _estimate_dim(source, plan)
    d_t = plan.d_target if plan.d_target is not None else _estimate_dim(target, plan)
    return learn_sa(fit_pca(source, d_s), fit_pca(target, d_t))


def score_matrix(
    train: FeatureMatrix,
    test: FeatureMatrix,
    metric: Metric,
    model: SaModel | GfkModel | None = None,
) -> np.ndarray:
    """(n_test x n_train) score table for the chosen metric."""
    if train.dim != test.dim:
        raise InvalidInputError("train/test feature dimensions differ")
    if metric is Metric.EUCLIDEAN:
        return cdist(test.rows, train.rows)
    if model is None:
        raise MissingModelError(f"metric {metric.key} requires a learned model")
    if metric in (Metric.SA_SIM, Metric.ESA_DIST):
        if not isinstance(model, SaModel):
            raise MissingModelError("sa/esa metrics require an alignment model")
        fn = sa_similarity_matrix if metric is Metric.SA_SIM else esa_distance_matrix
        return fn(np.asarray(train.rows, np.float64),
                  np.asarray(test.rows, np.float64), model).T
    if not isinstance(model, GfkModel):
        raise MissingModelError("gfk metric requires a kernel model")
    return gfk_similarity_matrix(np.asarray(test.rows, np.float64),
                                 np.asarray(train.rows, np.float64), model)


def nn_classify(
    train: FeatureMatrix,
    test: FeatureMatrix,
    metric: Metric = Metric.EUCLIDEAN,
    model: SaModel | GfkModel | None = None,
) -> list[Prediction]:
    """Label each test sample by its best-scoring training sample.

    Ties resolve to the lowest training row index.
    """
    if train.n == 0:
        raise InsufficientDataError("empty training set")
    if train.labels is None:
        raise MissingLabelsError("training samples must be labeled")
    scores = score_matrix(train, test, metric, model)
    best = np.argmin(scores, axis=1) if metric.ascending else np.argmax(scores, axis=1)
    return [
        Prediction(
            sample_id=test.ids[i],
            predicted_label=train.labels[j],
            nearest_source_id=train.ids[j],
            score=float(scores[i, j]),
        )
        for i, j in enumerate(best)
    ]


def evaluate_accuracy(preds: Sequence[Prediction], truth: Mapping[str, str]) -> float:
    """Percentage of predictions matching the true labels."""
    if not preds:
        raise InvalidInputError("no predictions to evaluate")
    correct = 0
    for p in preds:
        if p.sample_id not in truth:
            raise InvalidInputError(f"prediction for unknown id {p.sample_id!r}")
        correct += p.predicted_label == truth[p.sample_id]
    return 100.0 * correct / len(preds)


def _per_class_indices(labels: Sequence[str]) -> dict[str, np.ndarray]:
    out: dict[str, list[int]] = {}
    for i, lab in enumerate(labels):
        out.setdefault(lab, []).append(i)
    return {lab: np.array(idx) for lab, idx in sorted(out.items())}


def run_protocol(
    source: FeatureMatrix,
    target: FeatureMatrix,
    samples_per_class: int | str,
    repetitions: int,
    seed: int,
    metric: Metric = Metric.EUCLIDEAN,
    adapt: AdaptPlan | None = None,
) -> ProtocolResult:
    """Accuracy protocol with subsampled training labels.

    Per repetition, `samples_per_class` source images per class are drawn
    without replacement (seeded) and all target images classified; passing
    "all" uses the full source set and forces a single repetition.  Any
    adaptive model is learned once from all samples of both domains.
    """
    if source.labels is None or target.labels is None:
        raise MissingLabelsError("protocol needs labels on both domains")
    model = None
    if adapt is not None:
        model = learn_alignment(source, target, adapt)
        metric = adapt.metric
    truth = dict(zip(target.ids, target.labels))
    by_class = _per_class_indices(source.labels)

    if samples_per_class == "all":
        repetitions = 1
        draws = [np.arange(source.n)]
    else:
        m = int(samples_per_class)
        short = [lab for lab, idx in by_class.items() if idx.size < m]
        if short:
            raise InsufficientDataError(
                f"classes with fewer than {m} samples: {', '.join(short)}")
        rng = make_rng(seed)
        draws = []
        for _ in range(repetitions):
            picked = [rng.choice(idx, size=m, replace=False)
                      for _, idx in sorted(by_class.items())]
            draws.append(np.sort(np.concatenate(picked)))

    accs = []
    per_class_sums: dict[str, list[float]] = {lab: [] for lab in set(target.labels)}
    for idx in draws:
        preds = nn_classify(source.take(idx), target, metric, model)
        accs.append(evaluate_accuracy(preds, truth))
        by_target = _per_class_indices(target.labels)
        for lab, t_idx in by_target.items():
            hits = sum(preds[i].predicted_label == target.labels[i] for i in t_idx)
            per_class_sums[lab].append(100.0 * hits / t_idx.size)

    accs = np.asarray(accs)
    return ProtocolResult(
        mean_accuracy=float(accs.mean()),
        std_dev=float(accs.std()),
        repetitions=repetitions,
        per_class_accuracy={lab: float(np.mean(v)) for lab, v in per_class_sums.items()},
    )


def average_precision(ranked: Sequence[str], relevant: set[str]) -> float:
    """Mean of precision@rank over the relevant hits, out of all relevant."""
    if not relevant:
        raise InvalidInputError("empty relevant set")
    hits = 0
    precisions = []
    for rank, item in enumerate(ranked, start=1):
        if item in relevant:
            hits += 1
            precisions.append(hits / rank)
    return float(sum(precisions) / len(relevant))


def mean_average_precision(
    rankings: Mapping[str, Sequence[str]],
    relevance: Mapping[str, set[str]],
    classes: Mapping[str, str] | None = None,
    *,
    per_class: bool = True,
) -> float:
    """Class-mean mAP (mean over classes of per-class mean AP).

    Queries with no relevant items are excluded with a warning; pass
    per_class=False (or no class map) for plain per-query averaging.
    """
    aps: dict[str, float] = {}
    for qid, ranked in rankings.items():
        rel = relevance.get(qid, set())
        if not rel:
            warnings.warn(f"query {qid!r} has no relevant items; excluded")
            continue
        aps[qid] = average_precision(ranked, set(rel))
    if not aps:
        raise InvalidInputError("no queries with relevant items")
    if not per_class or classes is None:
        return float(np.mean(list(aps.values())))
    per_class_vals: dict[str, list[float]] = {}
    for qid, ap in aps.items():
        per_class_vals.setdefault(classes[qid], []).append(ap)
    return float(np.mean([np.mean(v) for v in per_class_vals.values()]))
