from __future__ import annotations

import random

import pytest

from vidtext.catalog import VideoRecord
from vidtext.errors import EmptyResults, MissingGroundTruth
from vidtext.evaluation import (
    SplitMix64,
    compute_metrics,
    format_comparison,
    sample_subset,
    topk_hit,
)
from vidtext.parsing import ParseStatus, PredictionEntry, RankedPrediction
from vidtext.prompts import Dialect


def _prediction(ids, video_id="v", status=None):
    """ids: list of label ids or None placeholders, most likely first."""
    entries = tuple(
        PredictionEntry(raw_text=f"guess{i}", label_id=label_id)
        for i, label_id in enumerate(ids)
    )
    if status is None:
        matched = [e.label_id for e in entries if e.label_id is not None]
        if not entries:
            status = ParseStatus.FAILED
        elif matched and len(matched) == len(entries):
            status = ParseStatus.PARSED
        else:
            status = ParseStatus.PARTIAL
    return RankedPrediction(
        video_id=video_id, entries=entries, parse_status=status, dialect=Dialect.JSON_TEXT
    )


# ---------------------------------------------------------------------------
# topk_hit
# ---------------------------------------------------------------------------

def test_hit_at_rank_one():
    assert topk_hit(_prediction([0, 1, 2]), 0, 1)


def test_hit_depends_on_k():
    pred = _prediction([0, 1, 2])
    assert not topk_hit(pred, 2, 1)
    assert topk_hit(pred, 2, 5)


def test_unmatched_placeholder_occupies_rank_one():
    pred = _prediction([None, 3])
    assert not topk_hit(pred, 3, 1)
    assert topk_hit(pred, 3, 2)


def test_failed_prediction_never_hits():
    pred = _prediction([])
    assert not topk_hit(pred, 0, 5)


# ---------------------------------------------------------------------------
# compute_metrics
# ---------------------------------------------------------------------------

def test_half_hit_rate():
    results = [
        (_prediction([0]), 0, "A"),
        (_prediction([1]), 0, "A"),
        (_prediction([2]), 2, "B"),
        (_prediction([3]), 1, "B"),
    ]
    report = compute_metrics(results)
    assert report.topk_accuracy[1] == 0.5
    assert report.n_videos == 4
    assert report.per_class["A"].n == 2
    assert report.per_class["A"].top1 == 0.5
    assert sum(s.n for s in report.per_class.values()) == report.n_videos


def test_all_failed():
    results = [(_prediction([]), 0, "A") for _ in range(3)]
    report = compute_metrics(results)
    assert report.topk_accuracy == {1: 0.0, 3: 0.0, 5: 0.0}
    assert report.n_parse_failed == 3


def test_all_perfect():
    results = [(_prediction([i, (i + 1) % 9]), i, f"C{i}") for i in range(9)]
    report = compute_metrics(results)
    assert report.topk_accuracy == {1: 1.0, 3: 1.0, 5: 1.0}
    assert all(s.top1 == 1.0 for s in report.per_class.values())


def test_empty_results_rejected():
    with pytest.raises(EmptyResults):
        compute_metrics([])


def test_monotone_in_k():
    rng = random.Random(3)
    results = []
    for i in range(40):
        ids = rng.sample(range(8), k=rng.randint(0, 5))
        results.append((_prediction(ids, f"v{i}"), rng.randrange(8), f"C{rng.randrange(3)}"))
    report = compute_metrics(results)
    assert report.topk_accuracy[1] <= report.topk_accuracy[3] <= report.topk_accuracy[5]


def test_balanced_classes_mean_equals_top1():
    rng = random.Random(11)
    results = []
    for ci in range(5):
        for vi in range(4):  # same count per class
            ids = rng.sample(range(10), k=3)
            results.append((_prediction(ids, f"v{ci}_{vi}"), rng.randrange(10), f"C{ci}"))
    report = compute_metrics(results)
    mean_per_class = sum(s.top1 for s in report.per_class.values()) / len(report.per_class)
    assert abs(mean_per_class - report.topk_accuracy[1]) < 1e-12


# ---------------------------------------------------------------------------
# sample_subset
# ---------------------------------------------------------------------------

def _catalog(classes, per_class_count):
    records = []
    for c in classes:
        for i in range(per_class_count):
            records.append(
                VideoRecord(
                    video_id=f"v_{c}_{i:03d}",
                    media_uri=f"mock://v_{c}_{i:03d}.avi",
                    total_frames=50,
                    duration_s=5.0,
                    ground_truth=c,
                )
            )
    return records


def test_subset_exhausts_small_classes():
    catalog = _catalog(["A"], 3)
    assert len(sample_subset(catalog, per_class=5, seed=1)) == 3


def test_subset_deterministic():
    catalog = _catalog(["A", "B", "C"], 10)
    first = [r.video_id for r in sample_subset(catalog, 4, seed=42)]
    second = [r.video_id for r in sample_subset(catalog, 4, seed=42)]
    assert first == second
    assert len(first) == 12


def test_subset_seed_changes_selection():
    catalog = _catalog(["A", "B"], 30)
    a = [r.video_id for r in sample_subset(catalog, 5, seed=1)]
    b = [r.video_id for r in sample_subset(catalog, 5, seed=2)]
    assert a != b


def test_subset_permutation_invariant():
    catalog = _catalog(["A", "B", "C"], 8)
    shuffled = list(catalog)
    random.Random(99).shuffle(shuffled)
    assert [r.video_id for r in sample_subset(catalog, 3, seed=7)] == [
        r.video_id for r in sample_subset(shuffled, 3, seed=7)
    ]


def test_subset_requires_ground_truth():
    record = VideoRecord("v1", "mock://v1.avi", 10, 1.0, ground_truth=None)
    with pytest.raises(MissingGroundTruth):
        sample_subset([record], 5, seed=1)


def test_splitmix64_known_stream_is_stable():
    rng = SplitMix64(42)
    first = [rng.next_u64() for _ in range(3)]
    rng2 = SplitMix64(42)
    assert first == [rng2.next_u64() for _ in range(3)]
    assert all(0 <= x < 2**64 for x in first)
    draws = [SplitMix64(7).randbelow(n) for n in (1, 2, 10)]
    assert all(0 <= d < n for d, n in zip(draws, (1, 2, 10)))


# ---------------------------------------------------------------------------
# comparison table
# ---------------------------------------------------------------------------

def test_format_comparison_aligns_rows():
    results = [(_prediction([0]), 0, "A"), (_prediction([1]), 0, "A")]
    report = compute_metrics(results, run_id="demo")
    text = format_comparison([report], title="sweep")
    lines = text.splitlines()
    assert lines[0] == "sweep"
    assert "top1" in lines[1] and "failed" in lines[1]
    assert lines[3].startswith("demo")
    assert "0.5000" in lines[3]
