"""Synthetic cross-era corpora for tests, benchmarks and fixtures.

The domain shift follows one mechanism throughout: class structure lives
on a low-dimensional latent subspace with per-axis variances kept distinct
(so principal directions are identifiable), and the target domain sees the
same latent distribution through a tilted copy of that subspace (each
basis direction rotated by a random angle toward a fresh orthogonal
direction) plus ambient Gaussian noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import FeatureStore
from .data import Domain, FeatureMatrix
from .util import l2_normalize_rows, make_rng


def manifold_samples(
    n: int,
    manifold_dim: int,
    ambient_dim: int,
    seed: int,
    noise: float = 0.0,
) -> FeatureMatrix:
    """Uniform samples from a unit m-cube embedded in R^D by a random frame."""
    rng = make_rng(seed)
    latent = rng.uniform(0.0, 1.0, size=(n, manifold_dim))
    frame, _ = np.linalg.qr(rng.normal(size=(ambient_dim, manifold_dim)))
    rows = latent @ frame.T
    if noise > 0.0:
        rows = rows + rng.normal(scale=noise, size=rows.shape)
    return FeatureMatrix.create(rows, domain=Domain.SOURCE)


def _tilted_frames(rng, ambient_dim: int, latent_dim: int,
                   angle_deg: tuple[float, float],
                   extra: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Source frame, the same frame rotated axis-wise by random angles, and
    `extra` further orthonormal directions disjoint from both."""
    frame, _ = np.linalg.qr(rng.normal(size=(ambient_dim, 2 * latent_dim + extra)))
    v_s = frame[:, :latent_dim]
    v_p = frame[:, latent_dim:2 * latent_dim]
    theta = np.deg2rad(rng.uniform(angle_deg[0], angle_deg[1], size=latent_dim))
    v_t = v_s * np.cos(theta)[None, :] + v_p * np.sin(theta)[None, :]
    return v_s, v_t, frame[:, 2 * latent_dim:]


def _latent_classes(rng, n_classes: int, latent_dim: int, within: float,
                    scale_floor: float = 0.4) -> tuple[np.ndarray, np.ndarray]:
    # Anisotropic center spread keeps principal directions identifiable;
    # isotropic within-class spread keeps the local dimension visible.
    scale = np.linspace(1.0, scale_floor, latent_dim)
    centers = rng.normal(size=(n_classes, latent_dim)) * scale[None, :]
    return centers, within * np.full(latent_dim, float(scale.mean()))


def domain_shift_pair(
    n_classes: int = 10,
    per_class_source: int = 20,
    per_class_target: int = 20,
    ambient_dim: int = 100,
    latent_dim: int = 20,
    angle_deg: tuple[float, float] = (78.0, 89.0),
    within: float = 1.0,
    target_noise: float = 0.1,
    seed: int = 0,
    normalize: bool = True,
) -> tuple[FeatureMatrix, FeatureMatrix]:
    """Labeled source/target matrices exhibiting a subspace tilt shift."""
    rng = make_rng(seed)
    v_s, v_t, _ = _tilted_frames(rng, ambient_dim, latent_dim, angle_deg)
    centers, within_scale = _latent_classes(rng, n_classes, latent_dim, within)

    def sample_domain(per_class, embed, noise, tag):
        rows, ids, labels = [], [], []
        for c in range(n_classes):
            z = centers[c][None, :] + rng.normal(size=(per_class, latent_dim)) * within_scale
            x = z @ embed.T
            if noise > 0.0:
                x = x + rng.normal(scale=noise, size=x.shape)
            rows.append(x)
            ids.extend(f"{tag}{c:02d}_{i:03d}" for i in range(per_class))
            labels.extend([f"loc{c:02d}"] * per_class)
        rows = np.vstack(rows)
        return rows, ids, labels

    s_rows, s_ids, s_labels = sample_domain(per_class_source, v_s, 0.0, "new")
    t_rows, t_ids, t_labels = sample_domain(per_class_target, v_t, target_noise, "old")
    if normalize:
        s_rows = l2_normalize_rows(s_rows)
        t_rows = l2_normalize_rows(t_rows)
    source = FeatureMatrix(rows=s_rows, ids=tuple(s_ids),
                           domain=Domain.SOURCE, labels=tuple(s_labels))
    target = FeatureMatrix(rows=t_rows, ids=tuple(t_ids),
                           domain=Domain.TARGET, labels=tuple(t_labels))
    return source, target


@dataclass(frozen=True)
class RetrievalCorpus:
    """Archive store (relevant + distractors), target queries, ground truth."""

    archive: FeatureStore
    queries: FeatureMatrix
    relevance: dict[str, frozenset[str]]
    classes: dict[str, str]


def retrieval_corpus(
    n_classes: int = 12,
    relevant_per_class: int = 25,
    queries_per_class: int = 20,
    n_distractors: int = 10_000,
    ambient_dim: int = 256,
    latent_dim: int = 6,
    angle_deg: tuple[float, float] = (55.0, 65.0),
    within: float = 0.55,
    target_noise: float = 0.005,
    archive_noise: float = 3.0,
    nuisance_scale: float = 0.0,
    private_dim: int = 3,
    private_scale: float = 2.4,
    distractor_spread: float = 1.0,
    distractor_overlap: float = 0.0,
    scale_floor: float = 0.6,
    seed: int = 0,
) -> RetrievalCorpus:
    """Cross-domain retrieval corpus with generic distractors.

    Era-specific corruption is asymmetric: archive vectors carry
    full-ambient noise (`archive_noise` controls its norm relative to the
    signal), which raw matching suffers in full but a low-dimensional
    source projection filters; queries carry a strong private component on
    a few directions orthogonal to every signal frame (`private_*`), which
    scrambles query-to-query matching while staying neutral for both raw
    and adapted archive ranking.  An optional `nuisance_scale` component
    aligned with the archive subspace adds query-side corruption that the
    alignment reaches only through the subspace tilt.
    """
    rng = make_rng(seed)
    v_s, v_t, v_n = _tilted_frames(rng, ambient_dim, latent_dim, angle_deg,
                                   extra=private_dim)
    centers, within_scale = _latent_classes(rng, n_classes, latent_dim, within,
                                            scale_floor=scale_floor)

    archive_rows, archive_ids, archive_labels = [], [], []
    sigma_a = archive_noise / np.sqrt(ambient_dim)
    for c in range(n_classes):
        z = centers[c][None, :] + rng.normal(
            size=(relevant_per_class, latent_dim)) * within_scale
        x = z @ v_s.T
        if archive_noise > 0.0:
            # Full-ambient archive noise: it corrupts raw matching through
            # per-item norm dilution but spreads over every direction, so a
            # low-dimensional source projection filters it out.
            x = x + rng.normal(scale=sigma_a, size=x.shape)
        archive_rows.append(x)
        archive_ids.extend(f"a{c:02d}_{i:03d}" for i in range(relevant_per_class))
        archive_labels.extend([f"loc{c:02d}"] * relevant_per_class)

    # Distractors depict unrelated content: generic ambient-space vectors,
    # optionally blended with source-subspace energy so they compete with
    # relevant items in archive-side rankings.
    if n_distractors > 0:
        zd = rng.normal(size=(n_distractors, ambient_dim)) * distractor_spread
        if distractor_overlap > 0.0:
            lat = rng.normal(size=(n_distractors, latent_dim)) \
                * np.linspace(1.0, scale_floor, latent_dim)[None, :]
            zd = zd + distractor_overlap * (lat @ v_s.T) \
                * np.linalg.norm(zd, axis=1, keepdims=True)
        archive_rows.append(zd)
        archive_ids.extend(f"d{i:06d}" for i in range(n_distractors))
        archive_labels.extend([None] * n_distractors)

    rows = l2_normalize_rows(np.vstack(archive_rows)).astype(np.float32)
    flags = np.zeros(rows.shape[0], dtype=bool)
    flags[-n_distractors:] = n_distractors > 0
    archive = FeatureStore(ids=tuple(archive_ids), values=rows, flags=flags)

    by_class: dict[str, frozenset[str]] = {}
    for label in {lab for lab in archive_labels if lab is not None}:
        by_class[label] = frozenset(
            i for i, lab in zip(archive_ids, archive_labels) if lab == label)

    q_rows, q_ids, relevance, classes = [], [], {}, {}
    for c in range(n_classes):
        label = f"loc{c:02d}"
        z = centers[c][None, :] + rng.normal(
            size=(queries_per_class, latent_dim)) * within_scale
        x = z @ v_t.T + rng.normal(scale=target_noise,
                                   size=(queries_per_class, ambient_dim))
        if nuisance_scale > 0.0:
            w = rng.normal(scale=nuisance_scale, size=(queries_per_class, latent_dim))
            x = x + w @ v_s.T
        if private_dim > 0 and private_scale > 0.0:
            p = rng.normal(scale=private_scale, size=(queries_per_class, private_dim))
            x = x + p @ v_n.T
        q_rows.append(x)
        for i in range(queries_per_class):
            qid = f"q{c:02d}_{i:03d}"
            q_ids.append(qid)
            relevance[qid] = by_class[label]
            classes[qid] = label
    queries = FeatureMatrix(rows=l2_normalize_rows(np.vstack(q_rows)),
                            ids=tuple(q_ids), domain=Domain.TARGET,
                            labels=tuple(classes[q] for q in q_ids))
    return RetrievalCorpus(archive=archive, queries=queries,
                           relevance=relevance, classes=classes)
