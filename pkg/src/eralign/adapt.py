"""Subspace domain adaptation.

Three unsupervised adapters over PCA subspaces:

* subspace alignment (SA): closed-form basis alignment M = Bs^T Bt scored
  by an inner product in the aligned coordinates;
* extended subspace alignment (ESA): the same alignment scored by the
  Euclidean distance in the target coordinate system, allowing different
  source/target dimensionalities;
* geodesic flow kernel (GFK): similarity integrated along the Grassmannian
  geodesic between the two subspaces, closed form via principal angles.

Sample vectors are centered with their own domain's mean before any basis
multiplication; the PCA coordinates are mean-centered by construction, so
the scoring formulas assume centered inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space

from .data import FeatureMatrix
from .errors import (
    DegenerateDataError,
    DegenerateSpectrumError,
    InvalidDimensionError,
    InvalidInputError,
    MissingLabelsError,
)
from .subspace import Subspace, fit_pca
from .util import make_rng

# Default cap on subspace size for cross-validated dimension selection.
DEFAULT_D_MAX = 256

_SDM_SATURATION_TOL = 1e-6


@dataclass(frozen=True)
class SaModel:
    """Learned subspace alignment: M = Bs^T Bt and x_a = Bs M."""

    source: Subspace
    target: Subspace
    m: np.ndarray    # d_S x d_T
    x_a: np.ndarray  # D x d_T

    def __post_init__(self):
        for name in ("m", "x_a"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.m.shape != (self.source.dim, self.target.dim):
            raise InvalidInputError("alignment matrix shape mismatch")
        if np.any(np.linalg.norm(self.x_a, axis=0) > 1.0 + 1e-8):
            raise InvalidInputError("aligned basis columns must have norm <= 1")

    @property
    def ambient_dim(self) -> int:
        return self.source.ambient_dim


@dataclass(frozen=True)
class GfkModel:
    """Geodesic flow kernel matrix G (symmetric PSD) at shared dimension d."""

    g: np.ndarray
    d: int

    def __post_init__(self):
        g = np.asarray(self.g, dtype=np.float64).copy()
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise InvalidInputError("kernel matrix must be square")
        if np.max(np.abs(g - g.T)) > 1e-8:
            raise InvalidInputError("kernel matrix must be symmetric")
        g.setflags(write=False)
        object.__setattr__(self, "g", g)

    @property
    def ambient_dim(self) -> int:
        return self.g.shape[0]


def learn_sa(source: Subspace, target: Subspace) -> SaModel:
    """Closed-form alignment minimizing ||Bs M - Bt||_F^2 over M."""
    if source.ambient_dim != target.ambient_dim:
        raise InvalidInputError("subspaces live in different ambient dimensions")
    m = source.basis.T @ target.basis
    return SaModel(source=source, target=target, m=m, x_a=source.basis @ m)


def _center(x: np.ndarray, mean: np.ndarray, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != mean.shape[0]:
        raise InvalidInputError(f"{what} dimension {x.shape[-1]} != {mean.shape[0]}")
    return x - mean


def map_source(model: SaModel, x_s: np.ndarray) -> np.ndarray:
    """Source samples in target-aligned coordinates: (x - mean_S) X_a."""
    return _center(x_s, model.source.mean, "source sample") @ model.x_a


def map_target(model: SaModel, x_t: np.ndarray) -> np.ndarray:
    """Target samples in target coordinates: (x - mean_T) Bt."""
    return _center(x_t, model.target.mean, "target sample") @ model.target.basis


def sa_similarity(x_s: np.ndarray, x_t: np.ndarray, model: SaModel) -> float:
    """Inner product of the aligned source and the projected target sample."""
    return float(map_source(model, x_s) @ map_target(model, x_t))


def esa_distance(x_s: np.ndarray, x_t: np.ndarray, model: SaModel) -> float:
    """Euclidean distance between aligned source and projected target."""
    return float(np.linalg.norm(map_source(model, x_s) - map_target(model, x_t)))


def sa_similarity_matrix(rows_s: np.ndarray, rows_t: np.ndarray, model: SaModel) -> np.ndarray:
    """(n_s x n_t) similarity table; rows are source, columns target."""
    return map_source(model, rows_s) @ map_target(model, rows_t).T


def esa_distance_matrix(rows_s: np.ndarray, rows_t: np.ndarray, model: SaModel) -> np.ndarray:
    """(n_s x n_t) distances in the target coordinate system."""
    ps = map_source(model, rows_s)
    pt = map_target(model, rows_t)
    sq = (
        np.sum(ps * ps, axis=1)[:, None]
        - 2.0 * ps @ pt.T
        + np.sum(pt * pt, axis=1)[None, :]
    )
    return np.sqrt(np.maximum(sq, 0.0))


def _two_fold_assignments(labels: tuple[str, ...], seed: int) -> np.ndarray:
    """Stratified fold ids (0/1); singleton classes get -1 (always train)."""
    rng = make_rng(seed)
    fold = np.full(len(labels), -1, dtype=np.int64)
    by_class: dict[str, list[int]] = {}
    for i, lab in enumerate(labels):
        by_class.setdefault(lab, []).append(i)
    for lab in sorted(by_class):
        idx = np.array(by_class[lab])
        if idx.size < 2:
            continue
        perm = rng.permutation(idx.size)
        half = idx.size // 2
        fold[idx[perm[:half]]] = 0
        fold[idx[perm[half:]]] = 1
    return fold


def select_dim_sa(source_data: FeatureMatrix, d_max: int, seed: int = 0) -> int:
    """Subspace size minimizing two-fold CV nearest-neighbor error.

    PCA is fit once on all source samples (subspace learning is
    unsupervised); the cross-validation only splits the labeled NN
    classification.  Ties resolve to the smallest d.
    """
    if source_data.labels is None:
        raise MissingLabelsError("source labels required for CV dimension selection")
    n, D = source_data.n, source_data.dim
    d_cap = min(d_max, DEFAULT_D_MAX, n - 1, D)
    if d_cap < 1:
        raise InvalidDimensionError("no feasible subspace dimension")
    space = fit_pca(source_data, d_cap)
    coords = (np.asarray(source_data.rows, np.float64) - space.mean) @ space.basis
    labels = np.asarray(source_data.labels)
    fold = _two_fold_assignments(source_data.labels, seed)

    best_d, best_err = 1, np.inf
    for d in range(1, d_cap + 1):
        pts = coords[:, :d]
        errors = 0
        total = 0
        for test_fold in (0, 1):
            test_idx = np.flatnonzero(fold == test_fold)
            train_idx = np.flatnonzero(fold != test_fold)
            if test_idx.size == 0 or train_idx.size == 0:
                continue
            diff = pts[test_idx][:, None, :] - pts[train_idx][None, :, :]
            nearest = np.argmin(np.sum(diff * diff, axis=2), axis=1)
            errors += int(np.sum(labels[train_idx][nearest] != labels[test_idx]))
            total += test_idx.size
        err = errors / total if total else 0.0
        if err < best_err - 1e-12:
            best_d, best_err = d, err
    return best_d


def _gfk_lambda_terms(theta: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Diagonal integral coefficients with analytic limits at theta -> 0."""
    small = theta < 1e-7
    safe = np.where(small, 1.0, theta)
    lam1 = np.where(small, 1.0, 0.5 + np.sin(2.0 * safe) / (4.0 * safe))
    lam2 = np.where(small, 0.0, (np.cos(2.0 * safe) - 1.0) / (4.0 * safe))
    lam3 = np.where(small, 0.0, 0.5 - np.sin(2.0 * safe) / (4.0 * safe))
    return lam1, lam2, lam3


def learn_gfk(source: Subspace, target: Subspace, d: int) -> GfkModel:
    """Closed-form geodesic flow kernel between the top-d subspaces.

    Requires 2d <= D so the orthogonal complement of the source basis can
    host the out-of-subspace component of the geodesic.
    """
    if source.ambient_dim != target.ambient_dim:
        raise InvalidInputError("subspaces live in different ambient dimensions")
    D = source.ambient_dim
    if d < 1 or source.dim < d or target.dim < d:
        raise InvalidDimensionError("both subspaces must provide at least d directions")
    if 2 * d > D:
        raise InvalidDimensionError(f"need 2d <= D, got d={d}, D={D}")
    bs = source.basis[:, :d]
    bt = target.basis[:, :d]
    rs = null_space(bs.T)  # D x (D - d)

    a = bs.T @ bt
    u1, gamma, v1t = np.linalg.svd(a)
    gamma = np.clip(gamma, 0.0, 1.0)
    theta = np.arccos(gamma)
    sigma = np.sin(theta)

    w = (rs.T @ bt) @ v1t.T
    u2 = np.zeros_like(w)
    usable = sigma > 1e-9
    u2[:, usable] = -w[:, usable] / sigma[usable][None, :]

    lam1, lam2, lam3 = _gfk_lambda_terms(theta)
    p1 = bs @ u1
    p2 = rs @ u2
    g = (
        (p1 * lam1[None, :]) @ p1.T
        + (p1 * lam2[None, :]) @ p2.T
        + (p2 * lam2[None, :]) @ p1.T
        + (p2 * lam3[None, :]) @ p2.T
    )
    g = 0.5 * (g + g.T)
    return GfkModel(g=g, d=d)


def gfk_similarity(x_i: np.ndarray, x_j: np.ndarray, model: GfkModel) -> float:
    """Kernel similarity x_i G x_j^T."""
    x_i = np.asarray(x_i, dtype=np.float64)
    x_j = np.asarray(x_j, dtype=np.float64)
    if x_i.shape[-1] != model.ambient_dim or x_j.shape[-1] != model.ambient_dim:
        raise InvalidInputError("sample dimension does not match kernel")
    return float(x_i @ model.g @ x_j)


def gfk_similarity_matrix(rows_i: np.ndarray, rows_j: np.ndarray, model: GfkModel) -> np.ndarray:
    rows_i = np.asarray(rows_i, dtype=np.float64)
    rows_j = np.asarray(rows_j, dtype=np.float64)
    if rows_i.shape[-1] != model.ambient_dim or rows_j.shape[-1] != model.ambient_dim:
        raise InvalidInputError("sample dimension does not match kernel")
    return rows_i @ model.g @ rows_j.T


def _largest_principal_angle(b1: np.ndarray, b2: np.ndarray) -> float:
    s = np.linalg.svd(b1.T @ b2, compute_uv=False)
    return float(np.arccos(np.clip(s[-1], 0.0, 1.0)))


def select_dim_sdm(source: FeatureMatrix, target: FeatureMatrix, d_cap: int) -> int:
    """Shared dimension from the subspace disagreement measure.

    disagreement(d) = 0.5 (sin a_d + sin b_d) where a_d / b_d are the d-th
    principal angles of source-vs-pooled and target-vs-pooled subspaces;
    returns one less than the first saturated dimension (disagreement = 1),
    clamped to [1, d_cap]; d_cap when saturation never occurs.
    """
    if source.dim != target.dim:
        raise InvalidInputError("source/target feature dimensions differ")
    pooled = FeatureMatrix.create(
        np.vstack([source.rows, target.rows]), domain=source.domain)
    sweep_cap = min(source.n - 1, target.n - 1, pooled.n - 1, source.dim)
    if sweep_cap < 1:
        raise DegenerateDataError("not enough samples for SDM")
    try:
        bs = fit_pca(source, sweep_cap).basis
        bt = fit_pca(target, sweep_cap).basis
        bp = fit_pca(pooled, sweep_cap).basis
    except DegenerateSpectrumError as exc:
        raise DegenerateDataError(str(exc)) from exc

    for d in range(1, sweep_cap + 1):
        alpha = _largest_principal_angle(bs[:, :d], bp[:, :d])
        beta = _largest_principal_angle(bt[:, :d], bp[:, :d])
        disagreement = 0.5 * (np.sin(alpha) + np.sin(beta))
        if abs(disagreement - 1.0) < _SDM_SATURATION_TOL:
            return int(np.clip(d - 1, 1, d_cap))
    return int(max(1, min(d_cap, sweep_cap)))
