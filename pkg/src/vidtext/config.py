"""Run configuration shared by all CLI stages.

The config fingerprint covers every field; any change produces new artifact
identities so stale descriptors or predictions are never mixed into a run.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path

from .prompts import ContextLevel

MOCK_MODES = ("off", "keyword", "oracle")


@dataclass
class RunConfig:
    catalog_path: Path
    labels_path: Path
    cache_path: Path
    output_dir: Path
    profiles_path: Path | None = None
    profile_name: str = ""
    context_level: ContextLevel = ContextLevel.CAPTIONS_SPEECH_AUDIO
    n_frames: int = 5
    threshold: float = 0.2
    max_tags: int = 5
    per_class: int | None = None
    seed: int = 42
    temperature: float = 0.0
    mock_mode: str = "off"
    tag_vocab_path: Path | None = None
    sidecar_url: str = "http://127.0.0.1:8008"

    def __post_init__(self):
        self.catalog_path = Path(self.catalog_path)
        self.labels_path = Path(self.labels_path)
        self.cache_path = Path(self.cache_path)
        self.output_dir = Path(self.output_dir)
        if self.profiles_path is not None:
            self.profiles_path = Path(self.profiles_path)
        if self.tag_vocab_path is not None:
            self.tag_vocab_path = Path(self.tag_vocab_path)
        if self.mock_mode not in MOCK_MODES:
            raise ValueError(f"mock_mode must be one of {MOCK_MODES}")
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")
        if self.max_tags < 1:
            raise ValueError("max_tags must be >= 1")
        if self.per_class is not None and self.per_class < 1:
            raise ValueError("per_class must be >= 1")

    def to_dict(self) -> dict:
        return {
            "catalog_path": str(self.catalog_path),
            "labels_path": str(self.labels_path),
            "cache_path": str(self.cache_path),
            "profiles_path": str(self.profiles_path) if self.profiles_path else None,
            "output_dir": str(self.output_dir),
            "profile_name": self.profile_name,
            "context_level": self.context_level.name.lower(),
            "n_frames": self.n_frames,
            "threshold": self.threshold,
            "max_tags": self.max_tags,
            "per_class": self.per_class,
            "seed": self.seed,
            "temperature": self.temperature,
            "mock_mode": self.mock_mode,
            "tag_vocab_path": str(self.tag_vocab_path) if self.tag_vocab_path else None,
            "sidecar_url": self.sidecar_url,
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def with_value(self, **changes) -> RunConfig:
        return replace(self, **changes)

    # artifact locations inside the run directory

    @property
    def raw_responses_path(self) -> Path:
        return self.output_dir / "raw_responses.jsonl"

    @property
    def predictions_path(self) -> Path:
        return self.output_dir / "predictions.jsonl"

    @property
    def report_path(self) -> Path:
        return self.output_dir / "report.json"
