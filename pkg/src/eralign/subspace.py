"""Dense PCA subspace learning and intrinsic-dimensionality estimation.

Estimators: eigenvalue energy threshold (EIG), the Levina-Bickel maximum
likelihood estimator (MLE), geodesic-minimum-spanning-tree scaling (GMST)
and the correlation dimension (CDM).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.sparse.csgraph import minimum_spanning_tree
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist, squareform

from .data import FeatureMatrix
from .errors import (
    DegenerateDataError,
    DegenerateSpectrumError,
    InsufficientDataError,
    InvalidDimensionError,
    InvalidInputError,
)
from .util import make_rng

_EIGENVALUE_CLAMP = -1e-10


class DimMethod(Enum):
    EIG = "eig"
    MLE = "mle"
    GMST = "gmst"
    CDM = "cdm"


@dataclass(frozen=True)
class Subspace:
    """Mean vector plus an orthonormal basis with descending eigenvalues."""

    mean: np.ndarray
    basis: np.ndarray       # D x d, orthonormal columns
    eigenvalues: np.ndarray  # d, non-increasing, >= 0

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).copy()
        basis = np.asarray(self.basis, dtype=np.float64).copy()
        eig = np.asarray(self.eigenvalues, dtype=np.float64).copy()
        if basis.ndim != 2 or mean.ndim != 1 or basis.shape[0] != mean.shape[0]:
            raise InvalidInputError("basis must be D x d with a D-vector mean")
        if eig.shape != (basis.shape[1],):
            raise InvalidInputError("one eigenvalue per basis column required")
        gram = basis.T @ basis
        if np.max(np.abs(gram - np.eye(basis.shape[1]))) > 1e-8:
            raise InvalidInputError("basis columns must be orthonormal")
        if np.any(np.diff(eig) > 1e-9):
            raise InvalidInputError("eigenvalues must be non-increasing")
        if np.any(eig < _EIGENVALUE_CLAMP):
            raise InvalidInputError("eigenvalues must be nonnegative")
        eig = np.maximum(eig, 0.0)
        for a in (mean, basis, eig):
            a.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "eigenvalues", eig)

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


@dataclass(frozen=True)
class DimEstimate:
    """Possibly fractional dimensionality estimate from one method."""

    value: float
    method: DimMethod

    def __post_init__(self):
        if not (self.value > 0.0 and math.isfinite(self.value)):
            raise InvalidInputError("dimension estimate must be a positive real")

    @property
    def rounded(self) -> int:
        return max(1, int(math.floor(self.value + 0.5)))


def _fix_signs(basis: np.ndarray) -> np.ndarray:
    """Flip columns so the largest-magnitude entry is positive (determinism)."""
    flip = basis[np.argmax(np.abs(basis), axis=0), np.arange(basis.shape[1])] < 0
    out = basis.copy()
    out[:, flip] *= -1.0
    return out


def _complete_basis(partial: np.ndarray, d: int) -> np.ndarray:
    """Extend orthonormal columns to d columns using canonical directions."""
    D = partial.shape[0]
    cols = [partial[:, i] for i in range(partial.shape[1])]
    for j in range(D):
        if len(cols) == d:
            break
        v = np.zeros(D)
        v[j] = 1.0
        for c in cols:
            v -= (c @ v) * c
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            cols.append(v / norm)
    if len(cols) < d:
        raise InvalidDimensionError("cannot complete basis to requested dimension")
    return np.column_stack(cols)


def fit_pca(data: FeatureMatrix, d: int) -> Subspace:
    """Top-d principal subspace of mean-centered data, covariance divisor n-1.

    Uses the Gram-matrix route when D greatly exceeds n; eigenvalues from
    both routes agree to reference precision.
    """
    n, D = data.n, data.dim
    if n < 2:
        raise InsufficientDataError("PCA needs at least 2 samples")
    if not (1 <= d <= min(n - 1, D)):
        raise InvalidDimensionError(
            f"d={d} outside [1, {min(n - 1, D)}] for n={n}, D={D}")
    rows = np.asarray(data.rows, dtype=np.float64)
    mean = rows.mean(axis=0)
    centered = rows - mean
    total_var = float(np.sum(centered * centered)) / (n - 1)
    if total_var <= 1e-300:
        raise DegenerateSpectrumError("zero covariance: all samples identical")

    if D > max(n, 256):
        gram = centered @ centered.T / (n - 1)
        vals, vecs = np.linalg.eigh(gram)
        order = np.argsort(vals)[::-1]
        vals, vecs = vals[order], vecs[:, order]
        vals = np.maximum(vals, 0.0)
        pos = vals > vals[0] * 1e-12
        rank = int(np.count_nonzero(pos))
        take = min(d, rank)
        basis = centered.T @ vecs[:, :take]
        basis /= np.sqrt(vals[:take] * (n - 1))[None, :]
        if take < d:
            basis = _complete_basis(basis, d)
        eig = np.concatenate([vals[:take], np.zeros(d - take)])
    else:
        cov = centered.T @ centered / (n - 1)
        vals, vecs = np.linalg.eigh(cov)
        order = np.argsort(vals)[::-1]
        eig = np.maximum(vals[order][:d], 0.0)
        basis = vecs[:, order][:, :d]

    return Subspace(mean=mean, basis=_fix_signs(basis), eigenvalues=eig)


def project(s: Subspace, x: np.ndarray) -> np.ndarray:
    """basis^T (x - mean); accepts a single vector or a stack of rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != s.ambient_dim:
        raise InvalidInputError(
            f"vector dimension {x.shape[-1]} != ambient {s.ambient_dim}")
    return (x - s.mean) @ s.basis


def estimate_dim_eig(eigenvalues: np.ndarray, energy: float) -> DimEstimate:
    """Smallest d whose leading eigenvalues capture the requested variance."""
    eig = np.asarray(eigenvalues, dtype=np.float64)
    if eig.size == 0:
        raise InvalidInputError("empty spectrum")
    if not (0.0 < energy <= 1.0):
        raise InvalidInputError("energy must lie in (0, 1]")
    if np.any(np.diff(eig) > 1e-9):
        raise InvalidInputError("eigenvalues must be sorted descending")
    if np.any(eig < _EIGENVALUE_CLAMP):
        raise InvalidInputError("eigenvalues must be nonnegative")
    eig = np.maximum(eig, 0.0)
    total = float(eig.sum())
    if total <= 0.0:
        raise DegenerateSpectrumError("all-zero spectrum")
    ratio = np.cumsum(eig) / total
    d = int(np.searchsorted(ratio, energy - 1e-12) + 1)
    d = min(d, eig.size)
    return DimEstimate(value=float(d), method=DimMethod.EIG)


def _neighbor_distances(rows: np.ndarray, k: int) -> np.ndarray:
    """Distances to the k nearest neighbors (self excluded), zeros bumped.

    Exact zeros (duplicate points) get the smallest positive distance
    observed times 1e-6 added so log-ratios stay finite.
    """
    tree = cKDTree(rows)
    dist, _ = tree.query(rows, k=k + 1)
    dist = dist[:, 1:]
    positive = dist[dist > 0.0]
    if positive.size == 0:
        raise DegenerateDataError("all pairwise distances are zero")
    dist[dist == 0.0] += positive.min() * 1e-6
    return dist


def estimate_dim_mle(data: FeatureMatrix, k_min: int = 6, k_max: int = 12) -> DimEstimate:
    """Levina-Bickel MLE, averaged over points and then over k in [k_min, k_max]."""
    if k_min < 2 or k_max < k_min:
        raise InvalidInputError("need k_max >= k_min >= 2")
    if data.n <= k_max:
        raise InsufficientDataError(f"need more than {k_max} samples, got {data.n}")
    dist = _neighbor_distances(np.asarray(data.rows, dtype=np.float64), k_max)
    per_k = []
    for k in range(k_min, k_max + 1):
        logs = np.log(dist[:, k - 1][:, None] / dist[:, : k - 1])
        with np.errstate(divide="ignore"):
            est = (k - 1) / logs.sum(axis=1)
        est = est[np.isfinite(est)]
        if est.size == 0:
            raise DegenerateDataError("no finite per-point estimates")
        per_k.append(float(est.mean()))
    return DimEstimate(value=float(np.mean(per_k)), method=DimMethod.MLE)


def _mst_length(rows: np.ndarray) -> float:
    dm = squareform(pdist(rows))
    positive = dm[dm > 0.0]
    if positive.size == 0:
        raise DegenerateDataError("all points identical")
    # csgraph treats exact zeros as missing edges; bump duplicates.
    off = ~np.eye(dm.shape[0], dtype=bool)
    zero = (dm == 0.0) & off
    if zero.any():
        dm[zero] = positive.min() * 1e-9
    return float(minimum_spanning_tree(dm).sum())


def estimate_dim_fractal(
    data: FeatureMatrix,
    method: DimMethod,
    *,
    seed: int = 0,
    resamples: int = 5,
    band: tuple[float, float] = (0.0, 0.6),
    eval_points: int = 16,
) -> DimEstimate:
    """Fractal dimensionality via GMST length scaling or the correlation sum.

    GMST fits the slope s of ln(MST length) against ln(subsample size) over
    a geometric schedule {n/8, n/4, n/2, n} with `resamples` draws per size
    and solves s = (m-1)/m.  CDM fits the slope of ln C(r) against ln r over
    the `band` portion of the log-radius range between the 5th and 95th
    percentile pairwise distances; the default band keeps the fit inside
    the small-radius scaling regime, where the correlation sum is linear.
    """
    if method not in (DimMethod.GMST, DimMethod.CDM):
        raise InvalidInputError("method must be GMST or CDM")
    n = data.n
    if n < 50:
        raise InsufficientDataError("fractal estimators need n >= 50")
    rows = np.asarray(data.rows, dtype=np.float64)
    if np.allclose(rows, rows[0], atol=0.0):
        raise DegenerateDataError("all points identical")

    if method is DimMethod.GMST:
        rng = make_rng(seed)
        sizes = sorted({max(4, n // 8), max(4, n // 4), max(4, n // 2), n})
        log_n, log_len = [], []
        for size in sizes:
            full = None  # resamples of the full set are all identical
            for _ in range(resamples):
                if size < n:
                    length = _mst_length(rows[rng.choice(n, size=size, replace=False)])
                else:
                    full = _mst_length(rows) if full is None else full
                    length = full
                if length <= 0.0:
                    raise DegenerateDataError("zero-length spanning tree")
                log_n.append(math.log(size))
                log_len.append(math.log(length))
        slope = float(np.polyfit(log_n, log_len, 1)[0])
        slope = min(slope, 1.0 - 1e-6)
        value = 1.0 / (1.0 - slope)
        return DimEstimate(value=max(value, 1e-6), method=DimMethod.GMST)

    dists = pdist(rows)
    lo, hi = np.percentile(dists[dists > 0.0], [5.0, 95.0])
    if not (hi > lo > 0.0):
        raise DegenerateDataError("pairwise distances span no usable range")
    log_lo, log_hi = math.log(lo), math.log(hi)
    width = log_hi - log_lo
    grid = np.linspace(log_lo + band[0] * width, log_lo + band[1] * width, eval_points)
    radii = np.exp(grid)
    counts = np.searchsorted(np.sort(dists), radii, side="right")
    frac = counts / dists.size
    keep = frac > 0.0
    if np.count_nonzero(keep) < 2:
        raise DegenerateDataError("correlation sum empty over the fit band")
    slope = float(np.polyfit(grid[keep], np.log(frac[keep]), 1)[0])
    return DimEstimate(value=max(slope, 1e-6), method=DimMethod.CDM)
