"""Video catalog: one record per clip, loaded from CSV."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .errors import DataError

CATALOG_COLUMNS = ("video_id", "media_uri", "class_name", "total_frames", "duration_s")


@dataclass(frozen=True)
class VideoRecord:
    """One catalog entry: identity, media location, ground truth, frame metadata."""

    video_id: str
    media_uri: str
    total_frames: int
    duration_s: float
    ground_truth: str | None = None

    def __post_init__(self):
        if self.total_frames < 1:
            raise DataError(f"video {self.video_id!r}: total_frames must be >= 1")
        if self.duration_s < 0:
            raise DataError(f"video {self.video_id!r}: duration_s must be >= 0")

    @property
    def class_name(self) -> str | None:
        return self.ground_truth


def load_catalog(path: str | Path) -> list[VideoRecord]:
    """Load a catalog CSV with columns video_id, media_uri, class_name,
    total_frames, duration_s. Empty class_name means no ground truth.

    Raises:
        DataError: missing columns, malformed numbers, or duplicate video ids.
    """
    records: list[VideoRecord] = []
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in CATALOG_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise DataError(f"catalog {path}: missing columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            video_id = row["video_id"].strip()
            if video_id in seen:
                raise DataError(f"catalog {path}: duplicate video_id {video_id!r}")
            seen.add(video_id)
            try:
                total_frames = int(row["total_frames"])
                duration_s = float(row["duration_s"])
            except ValueError as exc:
                raise DataError(f"catalog {path} line {lineno}: {exc}") from exc
            class_name = row["class_name"].strip() or None
            records.append(
                VideoRecord(
                    video_id=video_id,
                    media_uri=row["media_uri"].strip(),
                    total_frames=total_frames,
                    duration_s=duration_s,
                    ground_truth=class_name,
                )
            )
    return records


def write_catalog(path: str | Path, records: list[VideoRecord]) -> None:
    """Write a catalog CSV in the canonical column order."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CATALOG_COLUMNS)
        for rec in records:
            writer.writerow(
                [rec.video_id, rec.media_uri, rec.class_name or "", rec.total_frames, rec.duration_s]
            )
