from __future__ import annotations

from filelock import FileLock

from vidtext.cli import main

CLASSES = ["ApplyEyeMakeup", "Archery", "BabyCrawling", "BenchPress", "Drumming"]
DISTRACTORS = ["HorseRace", "IceDancing", "JumpRope", "PizzaTossing", "PlayingGuitar"]


def _args(project, *extra, mock="keyword", profile="mock-json-text"):
    return [
        "--catalog-path", str(project.catalog_path),
        "--labels-path", str(project.labels_path),
        "--cache-path", str(project.cache_path),
        "--output-dir", str(project.output_dir),
        "--mock-mode", mock,
        "--profile-name", profile,
        "--context-level", "captions_speech",
        *extra,
    ]


def test_full_pipeline_exit_codes(fixture_project, capsys):
    project = fixture_project(CLASSES, per_class=2, distractors=DISTRACTORS)
    assert main(["describe", *_args(project)]) == 0
    assert main(["classify", *_args(project)]) == 0
    assert main(["report", *_args(project)]) == 0
    out = capsys.readouterr().out
    assert "top1=1.0000" in out
    assert (project.output_dir / "report.json").exists()
    assert (project.output_dir / "report.txt").exists()


def test_describe_rerun_reports_cached(fixture_project, capsys):
    project = fixture_project(CLASSES, per_class=1)
    assert main(["describe", *_args(project)]) == 0
    capsys.readouterr()
    assert main(["describe", *_args(project)]) == 0
    assert "0 new, 5 cached" in capsys.readouterr().out


def test_usage_error_is_exit_1(fixture_project, capsys):
    project = fixture_project(CLASSES, per_class=1)
    code = main(["describe", *_args(project), "--mock-mode", "bogus"])
    assert code == 1
    assert "usage error" in capsys.readouterr().err


def test_report_before_classify_is_exit_3(fixture_project, capsys):
    project = fixture_project(CLASSES, per_class=1)
    assert main(["describe", *_args(project)]) == 0
    code = main(["report", *_args(project)])
    assert code == 3
    assert "predictions" in capsys.readouterr().err


def test_lock_contention_is_exit_3(fixture_project, capsys):
    project = fixture_project(CLASSES, per_class=1)
    project.output_dir.mkdir(parents=True, exist_ok=True)
    other = FileLock(str(project.output_dir / ".vidtext.lock"))
    other.acquire()
    try:
        code = main(["describe", *_args(project)])
    finally:
        other.release()
    assert code == 3
    assert "another run" in capsys.readouterr().err


def test_unreachable_sidecar_is_exit_2(fixture_project, capsys):
    project = fixture_project(CLASSES, per_class=1)
    code = main(
        ["describe", *_args(project, mock="off"), "--sidecar-url", "http://127.0.0.1:9"]
    )
    assert code == 2
    assert "backend failure" in capsys.readouterr().err


def test_show_prompt_dumps_rendered_text(fixture_project, capsys):
    project = fixture_project(CLASSES, per_class=1, distractors=DISTRACTORS)
    assert main(["describe", *_args(project)]) == 0
    capsys.readouterr()
    assert main(["show-prompt", "--video-id", "v_Archery_g00", *_args(project)]) == 0
    out = capsys.readouterr().out
    assert "Please return the 5 labels" in out
    assert "Frame captions:" in out
    assert "fingerprint:" in out


def test_ablate_cli_writes_comparison(fixture_project, capsys):
    project = fixture_project(CLASSES[:2], per_class=2, distractors=DISTRACTORS)
    code = main(
        [
            "ablate",
            "--axis", "context_level",
            "--values", "captions,captions_speech",
            *_args(project),
        ]
    )
    assert code == 0
    assert (project.output_dir / "comparison.txt").exists()
    assert "context_level=captions" in capsys.readouterr().out


def test_reparse_cli(fixture_project, capsys):
    project = fixture_project(CLASSES, per_class=1, distractors=DISTRACTORS)
    assert main(["describe", *_args(project)]) == 0
    assert main(["classify", *_args(project)]) == 0
    out_path = project.root / "reparsed.jsonl"
    code = main(
        [
            "reparse",
            "--raw-log", str(project.output_dir / "raw_responses.jsonl"),
            "--labels-path", str(project.labels_path),
            "--out", str(out_path),
        ]
    )
    assert code == 0
    assert out_path.read_bytes() == (project.output_dir / "predictions.jsonl").read_bytes()
