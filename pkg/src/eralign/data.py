"""Core sample container shared by every module."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import InvalidInputError


class Domain(Enum):
    SOURCE = "source"
    TARGET = "target"


@dataclass(frozen=True)
class FeatureMatrix:
    """n x D matrix of sample feature vectors with per-row ids.

    Rows share one dimension, ids are unique, and when labels are present
    there is exactly one per row.  Instances are immutable after
    construction (the array is write-protected) and safe to share.
    """

    rows: np.ndarray
    ids: tuple[str, ...]
    domain: Domain
    labels: tuple[str, ...] | None = None
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        rows = np.asarray(self.rows)
        if rows.dtype not in (np.float32, np.float64):
            rows = rows.astype(np.float64)
        if rows.ndim != 2:
            raise InvalidInputError("rows must be a 2-d array")
        if rows.shape[1] < 1:
            raise InvalidInputError("feature dimension must be >= 1")
        rows = rows.copy()
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        ids = tuple(str(i) for i in self.ids)
        if len(ids) != rows.shape[0]:
            raise InvalidInputError("one id per row required")
        if len(set(ids)) != len(ids):
            raise InvalidInputError("ids must be unique within the matrix")
        object.__setattr__(self, "ids", ids)
        if self.labels is not None:
            labels = tuple(str(c) for c in self.labels)
            if len(labels) != rows.shape[0]:
                raise InvalidInputError("one label per row required")
            object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(ids)})

    @classmethod
    def create(
        cls,
        rows: np.ndarray,
        ids: Sequence[str] | None = None,
        domain: Domain = Domain.SOURCE,
        labels: Sequence[str] | None = None,
    ) -> "FeatureMatrix":
        rows = np.asarray(rows)
        if ids is None:
            ids = tuple(f"s{i:06d}" for i in range(rows.shape[0]))
        return cls(rows=rows, ids=tuple(ids), domain=domain,
                   labels=None if labels is None else tuple(labels))

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def row_of(self, sample_id: str) -> np.ndarray:
        try:
            return self.rows[self._index[sample_id]]
        except KeyError:
            raise InvalidInputError(f"unknown sample id {sample_id!r}") from None

    def take(self, indices: Sequence[int]) -> "FeatureMatrix":
        """Row subset preserving ids/labels (used by protocol subsampling)."""
        idx = list(indices)
        return FeatureMatrix(
            rows=self.rows[idx],
            ids=tuple(self.ids[i] for i in idx),
            domain=self.domain,
            labels=None if self.labels is None else tuple(self.labels[i] for i in idx),
        )
