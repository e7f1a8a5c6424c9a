from __future__ import annotations

from pathlib import Path

import pytest

from vidtext.labels import build_label_set
from vidtext.perception import AudioTag, Caption, DescriptorBundle, TranscriptSegment

DATA_DIR = Path(__file__).parent / "data"
CONFIGS_DIR = Path(__file__).parent.parent / "configs"

# Shared vocabulary for parser and prompt tests; chosen so no name is a
# substring of another after normalization.
CORPUS_LABEL_NAMES = [
    "ApplyEyeMakeup",
    "Archery",
    "BabyCrawling",
    "BenchPress",
    "Biking",
    "Drumming",
    "HorseRace",
    "IceDancing",
    "JumpRope",
    "PizzaTossing",
    "PlayingGuitar",
    "YoYo",
]


@pytest.fixture
def corpus_labels():
    return build_label_set(CORPUS_LABEL_NAMES)


@pytest.fixture
def sample_bundle():
    """A bundle with all three descriptor kinds populated."""
    return DescriptorBundle(
        video_id="v_Drumming_g01",
        captions=[
            Caption(frame_index=10, time_s=0.5, text="a man playing drums on stage"),
            Caption(frame_index=30, time_s=1.5, text="a drum kit under colored lights"),
        ],
        transcript=[
            TranscriptSegment(start_s=0.0, end_s=1.2, text="keep the rhythm going"),
            TranscriptSegment(start_s=1.2, end_s=2.0, text="one two three four"),
        ],
        audio_tags=[
            AudioTag(tag="drum", score=0.91),
            AudioTag(tag="music", score=0.55),
        ],
        provenance={"captions": {"backend": "mock", "n_frames": 5}},
    )


@pytest.fixture
def fixture_project(tmp_path):
    """Builder for synthetic mock-backed projects (catalog + labels on disk).

    speech_only=True gives videos anonymous stems and puts the class name in
    the mock transcript instead, so captions alone cannot identify them.
    """

    def build(classes, per_class=2, distractors=(), speech_only=False, total_frames=100):
        from types import SimpleNamespace

        from vidtext.catalog import VideoRecord, write_catalog

        records = []
        clip = 0
        for c in classes:
            for g in range(per_class):
                if speech_only:
                    uri = f"mock://clip{clip:03d}.avi?speech={c}"
                    vid = f"clip{clip:03d}"
                else:
                    vid = f"v_{c}_g{g:02d}"
                    uri = f"mock://{vid}.avi"
                clip += 1
                records.append(
                    VideoRecord(
                        video_id=vid,
                        media_uri=uri,
                        total_frames=total_frames,
                        duration_s=10.0,
                        ground_truth=c,
                    )
                )
        catalog_path = tmp_path / "catalog.csv"
        write_catalog(catalog_path, records)
        labels_path = tmp_path / "labels.txt"
        labels_path.write_text(
            "\n".join(list(distractors) + list(classes)) + "\n", encoding="utf-8"
        )
        return SimpleNamespace(
            root=tmp_path,
            catalog_path=catalog_path,
            labels_path=labels_path,
            cache_path=tmp_path / "cache.jsonl",
            output_dir=tmp_path / "out",
            records=records,
        )

    return build


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion at the end of the run."""
    lines = []
    for rep in terminalreporter.stats.get("passed", []):
        if "test_acceptance" in getattr(rep, "nodeid", "") and rep.when == "call":
            lines.append((rep.nodeid.split("::")[-1], "PASS"))
    for status in ("failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            if "test_acceptance" in getattr(rep, "nodeid", ""):
                lines.append((rep.nodeid.split("::")[-1], "FAIL"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, status in lines:
            terminalreporter.write_line(f"{status}  {name}")
