"""Resolved job configurations.

Every CLI command resolves its arguments into one of these dataclasses,
writes the result next to its outputs, and can be re-run from that file to
reproduce the outputs bit-exactly.  All randomness flows from explicit
seeds; nothing reads ambient entropy.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

# Defaults mirror the reference evaluation setup.
DEFAULT_VOCAB_SIZE = 3000
DEFAULT_GMM_COMPONENTS = 64
DEFAULT_FV_DIM = 8192
DEFAULT_MLE_K_MIN = 6
DEFAULT_MLE_K_MAX = 12
DEFAULT_REPETITIONS = 100
DEFAULT_FEEDBACK_SIZE = 3
DEFAULT_MIN_DIM_IMAGES = 15
DEFAULT_DESCRIPTOR_SAMPLE = 200_000


@dataclass(frozen=True)
class JobConfig:
    command: str
    seed: int = 0
    out_dir: str = "runs/latest"
    params: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_file(cls, path: str | Path) -> "JobConfig":
        data = json.loads(Path(path).read_text())
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})

    def write(self, out_dir: Path) -> Path:
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "config.json"
        path.write_text(self.to_json() + "\n")
        return path


@dataclass(frozen=True)
class ServeConfig:
    """Configuration for the retrieval service."""

    store_path: str
    sessions_dir: str
    manifest_path: str | None = None
    query_store_path: str | None = None
    relevance_path: str | None = None
    gmm_path: str | None = None
    host: str = "127.0.0.1"
    port: int = 8321
    min_dim_images: int = DEFAULT_MIN_DIM_IMAGES
    mle_k_min: int = DEFAULT_MLE_K_MIN
    mle_k_max: int = DEFAULT_MLE_K_MAX
    feedback_size: int = DEFAULT_FEEDBACK_SIZE
    max_k: int = 1000
    relearn: bool = False
