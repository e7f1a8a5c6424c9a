"""Top-k and per-class accuracy, plus seeded per-class subset sampling."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .catalog import VideoRecord
from .errors import EmptyResults, MissingGroundTruth
from .parsing import ParseStatus, RankedPrediction

TOP_K = (1, 3, 5)

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """Portable 64-bit-state generator (SplitMix64), fixed here so seeded
    subset selection reproduces bit-exactly on every platform."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def randbelow(self, n: int) -> int:
        # rejection sampling keeps the draw exactly uniform
        limit = ((1 << 64) // n) * n
        while True:
            draw = self.next_u64()
            if draw < limit:
                return draw % n


@dataclass(frozen=True)
class ClassStats:
    n: int
    top1: float


@dataclass
class EvalReport:
    """Accuracies and counts for one classification run."""

    run_id: str
    config_fingerprint: str
    n_videos: int
    topk_accuracy: dict[int, float]
    per_class: dict[str, ClassStats]
    n_parse_failed: int
    started_at: str = ""
    finished_at: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "config_fingerprint": self.config_fingerprint,
            "n_videos": self.n_videos,
            "topk_accuracy": {str(k): v for k, v in self.topk_accuracy.items()},
            "per_class": {
                name: {"n": s.n, "top1": s.top1} for name, s in self.per_class.items()
            },
            "n_parse_failed": self.n_parse_failed,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            **({"extra": self.extra} if self.extra else {}),
        }


def topk_hit(prediction: RankedPrediction, ground_truth_id: int, k: int) -> bool:
    """True iff the ground truth appears among the first k entries.

    Unmatched entries occupy their rank but can never hit; failed parses
    have no entries and are always misses.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    return any(e.label_id == ground_truth_id for e in prediction.entries[:k])


def compute_metrics(
    results: list[tuple[RankedPrediction, int, str]],
    run_id: str = "",
    config_fingerprint: str = "",
    started_at: str = "",
    finished_at: str = "",
) -> EvalReport:
    """Aggregate (prediction, ground_truth_id, class_name) triples.

    Raises:
        EmptyResults: nothing to score.
    """
    if not results:
        raise EmptyResults("no results to evaluate")
    n = len(results)
    hits = {k: 0 for k in TOP_K}
    per_class_n: dict[str, int] = {}
    per_class_hits: dict[str, int] = {}
    n_parse_failed = 0
    for prediction, gt_id, class_name in results:
        for k in TOP_K:
            if topk_hit(prediction, gt_id, k):
                hits[k] += 1
        per_class_n[class_name] = per_class_n.get(class_name, 0) + 1
        if topk_hit(prediction, gt_id, 1):
            per_class_hits[class_name] = per_class_hits.get(class_name, 0) + 1
        if prediction.parse_status is ParseStatus.FAILED:
            n_parse_failed += 1
    per_class = {
        name: ClassStats(n=count, top1=per_class_hits.get(name, 0) / count)
        for name, count in sorted(per_class_n.items())
    }
    return EvalReport(
        run_id=run_id,
        config_fingerprint=config_fingerprint,
        n_videos=n,
        topk_accuracy={k: hits[k] / n for k in TOP_K},
        per_class=per_class,
        n_parse_failed=n_parse_failed,
        started_at=started_at,
        finished_at=finished_at,
    )


def _class_seed(seed: int, class_name: str) -> int:
    digest = hashlib.sha256(f"{seed}:{class_name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def sample_subset(
    catalog: list[VideoRecord], per_class: int, seed: int
) -> list[VideoRecord]:
    """Pick up to per_class videos from every class, seeded and portable.

    Classes are processed in sorted name order and each class's records are
    sorted by video_id before the seeded draw, so the selection is invariant
    under any permutation of the input catalog.

    Raises:
        MissingGroundTruth: a record has no ground-truth label.
    """
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    groups: dict[str, list[VideoRecord]] = {}
    for rec in catalog:
        if rec.ground_truth is None:
            raise MissingGroundTruth(f"video {rec.video_id!r} has no ground truth")
        groups.setdefault(rec.ground_truth, []).append(rec)

    selected: list[VideoRecord] = []
    for class_name in sorted(groups):
        records = sorted(groups[class_name], key=lambda r: r.video_id)
        take = min(per_class, len(records))
        rng = SplitMix64(_class_seed(seed, class_name))
        # partial Fisher-Yates: the first `take` slots are the draw
        for i in range(take):
            j = i + rng.randbelow(len(records) - i)
            records[i], records[j] = records[j], records[i]
        selected.extend(records[:take])
    return selected


def format_comparison(reports: list[EvalReport], title: str = "") -> str:
    """Aligned plain-text table across runs, one row per report."""
    header = f"{'run':<40} {'top1':>7} {'top3':>7} {'top5':>7} {'n':>6} {'failed':>7}"
    lines = []
    if title:
        lines.append(title)
    lines.append(header)
    lines.append("-" * len(header))
    for rep in reports:
        lines.append(
            f"{rep.run_id:<40} "
            f"{rep.topk_accuracy[1]:>7.4f} "
            f"{rep.topk_accuracy[3]:>7.4f} "
            f"{rep.topk_accuracy[5]:>7.4f} "
            f"{rep.n_videos:>6d} "
            f"{rep.n_parse_failed:>7d}"
        )
    return "\n".join(lines) + "\n"
