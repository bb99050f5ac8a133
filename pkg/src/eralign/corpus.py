"""Dataset ingestion and persistence.

Manifests are line-delimited JSON records (human-diffable); feature and
model payloads are binary containers with fixed-layout headers.  All
persistence round-trips bit-exactly and writes are atomic
(write-temp-then-rename).
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .adapt import GfkModel, SaModel
from .data import Domain, FeatureMatrix
from .encode import Codebook, GmmModel
from .errors import (
    CorruptStoreError,
    InsufficientDataError,
    InvalidInputError,
    SchemaError,
    UnsupportedVersionError,
)
from .subspace import Subspace
from .util import PRNG_NAME, make_rng

FEATURE_MAGIC = b"ERFS"
MODEL_MAGIC = b"ERMD"
FORMAT_VERSION = 1
_DTYPE_TAG = b"<f4\x00"


class Era(Enum):
    OLD = "old"
    NEW = "new"


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    era: Era
    uri: str
    label: str | None = None
    year: int | None = None
    distractor: bool = False


@dataclass(frozen=True)
class Manifest:
    entries: tuple[ManifestEntry, ...]

    def era_counts(self) -> Counter:
        return Counter(e.era for e in self.entries)

    def class_counts(self) -> Counter:
        return Counter(e.label for e in self.entries if e.label is not None)

    def labels_for(self, ids: Sequence[str]) -> tuple[str, ...]:
        table = {e.id: e.label for e in self.entries}
        out = []
        for i in ids:
            if i not in table or table[i] is None:
                raise InvalidInputError(f"no label for id {i!r} in manifest")
            out.append(table[i])
        return tuple(out)

    def entry(self, entry_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.id == entry_id:
                return e
        raise InvalidInputError(f"unknown manifest id {entry_id!r}")


def load_manifest(path: str | Path) -> Manifest:
    """Parse and validate a JSONL manifest; errors carry line numbers."""
    path = Path(path)
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: invalid record: {exc}") from exc
            if not isinstance(rec, dict) or "id" not in rec:
                raise SchemaError(f"{path}:{lineno}: record must be an object with an id")
            rid = str(rec["id"])
            if rid in seen:
                raise SchemaError(f"{path}:{lineno}: duplicate id {rid!r}")
            seen.add(rid)
            try:
                era = Era(rec.get("era"))
            except ValueError:
                raise SchemaError(
                    f"{path}:{lineno}: unknown era {rec.get('era')!r}") from None
            distractor = bool(rec.get("distractor", False))
            label = rec.get("label")
            if label is None and not distractor:
                raise SchemaError(f"{path}:{lineno}: missing label for non-distractor")
            entries.append(ManifestEntry(
                id=rid, era=era, uri=str(rec.get("uri", "")),
                label=None if label is None else str(label),
                year=None if rec.get("year") is None else int(rec["year"]),
                distractor=distractor,
            ))
    if not entries:
        raise SchemaError(f"{path}: empty manifest")
    return Manifest(entries=tuple(entries))


def save_manifest(path: str | Path, manifest: Manifest) -> None:
    lines = []
    for e in manifest.entries:
        rec = {"id": e.id, "era": e.era.value, "uri": e.uri}
        if e.label is not None:
            rec["label"] = e.label
        if e.year is not None:
            rec["year"] = e.year
        if e.distractor:
            rec["distractor"] = True
        lines.append(json.dumps(rec, sort_keys=True))
    _atomic_write(Path(path), ("\n".join(lines) + "\n").encode("utf-8"))


@dataclass(frozen=True)
class FeatureStore:
    """In-memory image of a binary feature container (float32 payload)."""

    ids: tuple[str, ...]
    values: np.ndarray            # n x D float32
    flags: np.ndarray             # n bool, True marks a distractor row
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float32)
        flags = np.asarray(self.flags, dtype=bool).copy()
        if values.ndim != 2:
            raise InvalidInputError("store payload must be 2-d")
        if len(self.ids) != values.shape[0] or flags.shape != (values.shape[0],):
            raise InvalidInputError("ids/flags must match the payload row count")
        if len(set(self.ids)) != len(self.ids):
            raise InvalidInputError("store ids must be unique")
        values.setflags(write=False)
        flags.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "flags", flags)
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.ids)})

    @classmethod
    def from_matrix(cls, matrix: FeatureMatrix,
                    flags: np.ndarray | None = None) -> "FeatureStore":
        n = matrix.n
        return cls(ids=matrix.ids,
                   values=np.asarray(matrix.rows, dtype=np.float32),
                   flags=np.zeros(n, bool) if flags is None else np.asarray(flags, bool))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def row_index(self, sample_id: str) -> int:
        try:
            return self._index[sample_id]
        except KeyError:
            raise InvalidInputError(f"unknown store id {sample_id!r}") from None

    def to_matrix(self, domain: Domain = Domain.SOURCE,
                  manifest: Manifest | None = None) -> FeatureMatrix:
        labels = None if manifest is None else manifest.labels_for(self.ids)
        return FeatureMatrix(rows=self.values, ids=self.ids,
                             domain=domain, labels=labels)


def _atomic_write(path: Path, payload: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _encode_ids(ids: Sequence[str]) -> bytes:
    chunks = []
    for s in ids:
        raw = s.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise InvalidInputError("id longer than 65535 bytes")
        chunks.append(struct.pack("<H", len(raw)) + raw)
    return b"".join(chunks)


def save_features(path: str | Path, data: FeatureStore | FeatureMatrix) -> None:
    """Write the binary feature container (atomic replace)."""
    store = data if isinstance(data, FeatureStore) else FeatureStore.from_matrix(data)
    header = (
        FEATURE_MAGIC
        + struct.pack("<I", FORMAT_VERSION)
        + PRNG_NAME.encode("ascii").ljust(8, b"\x00")
        + struct.pack("<QQ", store.n, store.dim)
        + _DTYPE_TAG
    )
    body = _encode_ids(store.ids) + store.flags.astype(np.uint8).tobytes()
    payload = np.ascontiguousarray(store.values, dtype="<f4").tobytes()
    _atomic_write(Path(path), header + body + payload)


class FeatureStoreReader:
    """Streaming access to a feature container without loading the payload."""

    HEADER_LEN = 4 + 4 + 8 + 16 + 4

    def __init__(self, path: str | Path):
        self.path = Path(path)
        with self.path.open("rb") as fh:
            head = fh.read(self.HEADER_LEN)
            if len(head) < self.HEADER_LEN or head[:4] != FEATURE_MAGIC:
                raise CorruptStoreError(f"{self.path}: bad feature store header")
            version = struct.unpack_from("<I", head, 4)[0]
            if version != FORMAT_VERSION:
                raise UnsupportedVersionError(
                    f"{self.path}: unsupported store version {version}")
            self.prng = head[8:16].rstrip(b"\x00").decode("ascii")
            self.n, self.dim = struct.unpack_from("<QQ", head, 16)
            if head[32:36] != _DTYPE_TAG:
                raise CorruptStoreError(f"{self.path}: unsupported payload dtype")
            ids = []
            for _ in range(self.n):
                raw = fh.read(2)
                if len(raw) < 2:
                    raise CorruptStoreError(f"{self.path}: truncated id block")
                (length,) = struct.unpack("<H", raw)
                s = fh.read(length)
                if len(s) < length:
                    raise CorruptStoreError(f"{self.path}: truncated id block")
                ids.append(s.decode("utf-8"))
            self.ids = tuple(ids)
            flags = fh.read(self.n)
            if len(flags) < self.n:
                raise CorruptStoreError(f"{self.path}: truncated flags block")
            self.flags = np.frombuffer(flags, dtype=np.uint8).astype(bool)
            self._payload_offset = fh.tell()
        expected = self._payload_offset + self.n * self.dim * 4
        if self.path.stat().st_size != expected:
            raise CorruptStoreError(
                f"{self.path}: payload size mismatch "
                f"(have {self.path.stat().st_size}, want {expected})")

    def read_rows(self, start: int, stop: int) -> np.ndarray:
        if not (0 <= start <= stop <= self.n):
            raise InvalidInputError("row range out of bounds")
        count = stop - start
        with self.path.open("rb") as fh:
            fh.seek(self._payload_offset + start * self.dim * 4)
            raw = fh.read(count * self.dim * 4)
        return np.frombuffer(raw, dtype="<f4").reshape(count, self.dim)

    def iter_chunks(self, rows_per_chunk: int = 4096) -> Iterator[np.ndarray]:
        for start in range(0, self.n, rows_per_chunk):
            yield self.read_rows(start, min(start + rows_per_chunk, self.n))


def load_features(path: str | Path) -> FeatureStore:
    reader = FeatureStoreReader(path)
    return FeatureStore(ids=reader.ids, values=reader.read_rows(0, reader.n),
                        flags=reader.flags)


def merge_distractors(relevant: FeatureStore, distractors: FeatureStore) -> FeatureStore:
    """Concatenate stores, flagging every distractor row non-relevant."""
    if relevant.dim != distractors.dim:
        raise InvalidInputError("store dimensions differ")
    overlap = set(relevant.ids) & set(distractors.ids)
    if overlap:
        raise InvalidInputError(f"duplicate ids across stores: {sorted(overlap)[:5]}")
    return FeatureStore(
        ids=relevant.ids + distractors.ids,
        values=np.vstack([relevant.values, distractors.values]),
        flags=np.concatenate([relevant.flags, np.ones(distractors.n, bool)]),
    )


def sample_descriptors(stores: Sequence[FeatureStore], count: int,
                       seed: int) -> FeatureMatrix:
    """Uniform sample without replacement across stores, canonical order."""
    total = sum(s.n for s in stores)
    if count > total:
        raise InsufficientDataError(f"requested {count} of {total} descriptors")
    if not stores:
        raise InvalidInputError("no stores given")
    dims = {s.dim for s in stores}
    if len(dims) != 1:
        raise InvalidInputError("stores have differing dimensions")
    rng = make_rng(seed)
    picked = np.sort(rng.choice(total, size=count, replace=False))
    bounds = np.cumsum([0] + [s.n for s in stores])
    rows = np.empty((count, stores[0].dim), dtype=np.float32)
    ids = []
    for out_i, flat in enumerate(picked):
        si = int(np.searchsorted(bounds, flat, side="right") - 1)
        local = int(flat - bounds[si])
        rows[out_i] = stores[si].values[local]
        ids.append(f"{si}:{stores[si].ids[local]}")
    return FeatureMatrix(rows=rows, ids=tuple(ids), domain=Domain.SOURCE)


# --- model containers ------------------------------------------------------

Model = Codebook | GmmModel | SaModel | GfkModel | Subspace


def _model_payload(model: Model) -> tuple[str, dict[str, np.ndarray], dict]:
    if isinstance(model, Codebook):
        return "codebook", {"centers": model.centers}, {}
    if isinstance(model, GmmModel):
        return "gmm", {"weights": model.weights, "means": model.means,
                       "variances": model.variances}, {}
    if isinstance(model, Subspace):
        return "subspace", {"mean": model.mean, "basis": model.basis,
                            "eigenvalues": model.eigenvalues}, {}
    if isinstance(model, SaModel):
        arrays = {}
        for prefix, sub in (("source", model.source), ("target", model.target)):
            arrays[f"{prefix}_mean"] = sub.mean
            arrays[f"{prefix}_basis"] = sub.basis
            arrays[f"{prefix}_eigenvalues"] = sub.eigenvalues
        arrays["m"] = model.m
        arrays["x_a"] = model.x_a
        return "sa", arrays, {}
    if isinstance(model, GfkModel):
        return "gfk", {"g": model.g}, {"d": model.d}
    raise InvalidInputError(f"unsupported model type {type(model).__name__}")


def _model_from_payload(kind: str, arrays: dict[str, np.ndarray], meta: dict) -> Model:
    if kind == "codebook":
        return Codebook(centers=arrays["centers"])
    if kind == "gmm":
        return GmmModel(weights=arrays["weights"], means=arrays["means"],
                        variances=arrays["variances"])
    if kind == "subspace":
        return Subspace(mean=arrays["mean"], basis=arrays["basis"],
                        eigenvalues=arrays["eigenvalues"])
    if kind == "sa":
        return SaModel(
            source=Subspace(mean=arrays["source_mean"], basis=arrays["source_basis"],
                            eigenvalues=arrays["source_eigenvalues"]),
            target=Subspace(mean=arrays["target_mean"], basis=arrays["target_basis"],
                            eigenvalues=arrays["target_eigenvalues"]),
            m=arrays["m"], x_a=arrays["x_a"])
    if kind == "gfk":
        return GfkModel(g=arrays["g"], d=int(meta["d"]))
    raise UnsupportedVersionError(f"unknown model kind {kind!r}")


def save_model(path: str | Path, model: Model) -> None:
    """Versioned binary model container; numeric fields round-trip bit-exactly."""
    kind, arrays, meta = _model_payload(model)
    manifest = {
        "kind": kind,
        "meta": meta,
        "fields": [
            {"name": name, "shape": list(arr.shape), "dtype": "<f8"}
            for name, arr in arrays.items()
        ],
    }
    head_json = json.dumps(manifest, sort_keys=True).encode("utf-8")
    blob = b"".join(np.ascontiguousarray(arr, dtype="<f8").tobytes()
                    for arr in arrays.values())
    payload = (MODEL_MAGIC + struct.pack("<I", FORMAT_VERSION)
               + struct.pack("<I", len(head_json)) + head_json + blob)
    _atomic_write(Path(path), payload)


def load_model(path: str | Path) -> Model:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != MODEL_MAGIC:
        raise UnsupportedVersionError(f"{path}: not a model container")
    version = struct.unpack_from("<I", raw, 4)[0]
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported model version {version}")
    (head_len,) = struct.unpack_from("<I", raw, 8)
    try:
        manifest = json.loads(raw[12:12 + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptStoreError(f"{path}: bad model header") from exc
    offset = 12 + head_len
    arrays = {}
    for spec in manifest["fields"]:
        shape = tuple(spec["shape"])
        size = int(np.prod(shape)) if shape else 1
        end = offset + size * 8
        if end > len(raw):
            raise CorruptStoreError(f"{path}: truncated model payload")
        arrays[spec["name"]] = np.frombuffer(
            raw[offset:end], dtype="<f8").reshape(shape)
        offset = end
    return _model_from_payload(manifest["kind"], arrays, manifest.get("meta", {}))
