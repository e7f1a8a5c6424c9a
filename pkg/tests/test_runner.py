from __future__ import annotations

import json

import pytest

from vidtext import runner
from vidtext.config import RunConfig
from vidtext.errors import DataError, EmptyResults, FingerprintMismatch
from vidtext.perception import MockSidecarClient
from vidtext.prompts import ContextLevel
from vidtext.reasoning import ReasoningGateway, keyword_backend

CLASSES = ["ApplyEyeMakeup", "Archery", "BabyCrawling", "BenchPress", "Drumming"]
DISTRACTORS = ["HorseRace", "IceDancing", "JumpRope", "PizzaTossing", "PlayingGuitar", "YoYo"]


def _config(project, **overrides):
    defaults = dict(
        catalog_path=project.catalog_path,
        labels_path=project.labels_path,
        cache_path=project.cache_path,
        output_dir=project.output_dir,
        mock_mode="keyword",
        profile_name="mock-json-text",
        context_level=ContextLevel.CAPTIONS_SPEECH,
    )
    defaults.update(overrides)
    return RunConfig(**defaults)


def _quiet(*args, **kwargs):
    pass


@pytest.mark.parametrize(
    "profile_name", ["mock-function-call", "mock-json-text", "mock-numbered-list"]
)
def test_closed_loop_every_dialect(fixture_project, profile_name):
    project = fixture_project(CLASSES, per_class=2, distractors=DISTRACTORS)
    config = _config(project, profile_name=profile_name)
    runner.describe_run(config, echo=_quiet)
    runner.classify_run(config, echo=_quiet)
    report = runner.report_run(config, echo=_quiet)
    assert report.topk_accuracy[1] == 1.0
    assert report.n_parse_failed == 0
    assert report.n_videos == 10


def test_describe_rerun_is_cached(fixture_project):
    project = fixture_project(CLASSES, per_class=2)
    config = _config(project)
    assert runner.describe_run(config, echo=_quiet) == (10, 0)
    assert runner.describe_run(config, echo=_quiet) == (0, 10)


def test_describe_resumes_after_interrupt(fixture_project):
    project = fixture_project(CLASSES, per_class=2)
    config = _config(project)

    class InterruptingClient(MockSidecarClient):
        def __init__(self, fail_on_call):
            super().__init__()
            self.fail_on_call = fail_on_call
            self.caption_calls = 0

        def caption(self, media_uri, frame_indices):
            self.caption_calls += 1
            if self.caption_calls == self.fail_on_call:
                raise KeyboardInterrupt("simulated interrupt")
            return super().caption(media_uri, frame_indices)

    with pytest.raises(KeyboardInterrupt):
        runner.describe_run(config, client=InterruptingClient(fail_on_call=7), echo=_quiet)

    fresh = MockSidecarClient()
    new, cached = runner.describe_run(config, client=fresh, echo=_quiet)
    assert (new, cached) == (4, 6)
    assert sum(1 for call in fresh.call_log if call[0] == "caption") == 4


def test_classify_rerun_makes_zero_backend_calls(fixture_project):
    project = fixture_project(CLASSES, per_class=2, distractors=DISTRACTORS)
    config = _config(project)
    runner.describe_run(config, echo=_quiet)
    runner.classify_run(config, echo=_quiet)
    first_bytes = config.predictions_path.read_bytes()

    calls = []

    def counting(request):
        calls.append(request.video_id)
        return keyword_backend(request)

    runner.classify_run(config, gateway=ReasoningGateway(backend_override=counting), echo=_quiet)
    assert calls == []
    assert config.predictions_path.read_bytes() == first_bytes


def test_classify_without_descriptors_errors(fixture_project):
    project = fixture_project(CLASSES, per_class=1)
    config = _config(project)
    with pytest.raises(DataError, match="describe"):
        runner.classify_run(config, echo=_quiet)


def test_classify_per_class_subsets(fixture_project):
    project = fixture_project(CLASSES, per_class=3, distractors=DISTRACTORS)
    config = _config(project, per_class=2)
    runner.describe_run(config, echo=_quiet)
    runner.classify_run(config, echo=_quiet)
    lines = config.predictions_path.read_text(encoding="utf-8").splitlines()
    assert len(lines) - 1 == 2 * len(CLASSES)  # header + one line per selected video


def test_oracle_mock_mode_hits_without_clues(fixture_project):
    # anonymous stems, no speech hint: keyword would miss, the oracle cannot
    project = fixture_project(CLASSES, per_class=1, distractors=DISTRACTORS)
    rows = project.catalog_path.read_text(encoding="utf-8").splitlines()
    header, body = rows[0], rows[1:]
    anonymized = [header]
    for i, row in enumerate(body):
        cols = row.split(",")
        cols[1] = f"mock://anon{i:03d}.avi"
        anonymized.append(",".join(cols))
    project.catalog_path.write_text("\n".join(anonymized) + "\n", encoding="utf-8")

    config = _config(project, mock_mode="oracle", profile_name="mock-json-text")
    runner.describe_run(config, echo=_quiet)
    runner.classify_run(config, echo=_quiet)
    report = runner.report_run(config, echo=_quiet)
    assert report.topk_accuracy[1] == 1.0


def test_report_rejects_foreign_fingerprint(fixture_project):
    project = fixture_project(CLASSES, per_class=1, distractors=DISTRACTORS)
    config = _config(project)
    runner.describe_run(config, echo=_quiet)
    runner.classify_run(config, echo=_quiet)
    lines = config.predictions_path.read_text(encoding="utf-8").splitlines()
    lines[0] = json.dumps({"kind": "predictions", "config_fingerprint": "deadbeef"})
    config.predictions_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(FingerprintMismatch):
        runner.report_run(config, echo=_quiet)


def test_report_without_predictions_names_file(fixture_project):
    project = fixture_project(CLASSES, per_class=1)
    config = _config(project)
    with pytest.raises(EmptyResults, match="predictions"):
        runner.report_run(config, echo=_quiet)


def test_ablate_context_levels(fixture_project):
    project = fixture_project(CLASSES[:3], per_class=4, distractors=DISTRACTORS, speech_only=True)
    config = _config(project)
    reports, comparison = runner.ablate_run(
        config,
        "context_level",
        ["captions", "captions_speech", "captions_speech_audio"],
        echo=_quiet,
    )
    assert len(reports) == 3
    assert len({r.config_fingerprint for r in reports}) == 3
    by_run = {r.run_id: r for r in reports}
    acc_captions = by_run["context_level=captions"].topk_accuracy[1]
    acc_speech = by_run["context_level=captions_speech"].topk_accuracy[1]
    assert acc_speech > acc_captions
    assert comparison.exists()
    assert "context_level=captions" in comparison.read_text(encoding="utf-8")


def test_ablate_n_frames(fixture_project):
    project = fixture_project(CLASSES[:2], per_class=2, distractors=DISTRACTORS)
    config = _config(project)
    reports, _ = runner.ablate_run(config, "n_frames", [1, 5], echo=_quiet)
    assert len(reports) == 2
    assert reports[0].config_fingerprint != reports[1].config_fingerprint


def test_ablate_empty_values(fixture_project):
    project = fixture_project(CLASSES[:2], per_class=1)
    config = _config(project)
    with pytest.raises(EmptyResults):
        runner.ablate_run(config, "context_level", [], echo=_quiet)


def test_reparse_reproduces_predictions(fixture_project):
    project = fixture_project(CLASSES, per_class=2, distractors=DISTRACTORS)
    config = _config(project, profile_name="mock-numbered-list")
    runner.describe_run(config, echo=_quiet)
    runner.classify_run(config, echo=_quiet)
    out = project.root / "reparsed.jsonl"
    runner.reparse_run(
        config.raw_responses_path, config.labels_path, out, echo=_quiet
    )
    assert out.read_bytes() == config.predictions_path.read_bytes()
