"""Pipeline stages: describe (perception), classify (reasoning), report, ablate.

Stage separation keeps API spend isolated: describe talks only to the
perception sidecar, report touches no backend at all, and every stage is
resumable from its persisted artifacts.
"""

from __future__ import annotations

import json
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from .catalog import VideoRecord, load_catalog
from .config import RunConfig
from .errors import BackendExhausted, DataError, EmptyResults, FingerprintMismatch
from .evaluation import EvalReport, compute_metrics, format_comparison, sample_subset
from .labels import load_label_set, match_label
from .parsing import parse_response, prediction_from_record, prediction_to_record
from .perception import (
    DescriptorCache,
    MockSidecarClient,
    PerceptionConfig,
    SidecarClient,
    TagVocabulary,
    fetch_descriptors,
)
from .prompts import ContextLevel, Dialect, build_prompt, render_clues
from .reasoning import (
    BackendProfile,
    ReasoningGateway,
    ResponseLog,
    build_request,
    extract_content,
    load_profiles,
)

ABLATION_AXES = ("context_level", "n_frames")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def builtin_mock_profiles(mock_mode: str) -> dict[str, BackendProfile]:
    """Offline profiles usable without a profiles file, one per dialect."""
    base_url = f"mock://{mock_mode}"
    return {
        name: BackendProfile(name=name, base_url=base_url, dialect=dialect)
        for name, dialect in (
            ("mock-function-call", Dialect.FUNCTION_CALL),
            ("mock-json-text", Dialect.JSON_TEXT),
            ("mock-numbered-list", Dialect.NUMBERED_LIST),
        )
    }


def resolve_profile(config: RunConfig) -> BackendProfile:
    """Pick the backend profile for this run.

    mock_mode overrides the transport (base_url) but keeps the profile's
    dialect, so a run can be rehearsed offline in the exact request shape it
    will use live.
    """
    profiles: dict[str, BackendProfile] = {}
    if config.mock_mode != "off":
        profiles.update(builtin_mock_profiles(config.mock_mode))
    if config.profiles_path is not None:
        profiles.update(load_profiles(config.profiles_path))
    if not profiles:
        raise DataError("no profiles: give --profiles-path or turn on --mock-mode")
    name = config.profile_name
    if not name:
        if len(profiles) == 1:
            name = next(iter(profiles))
        elif config.mock_mode != "off":
            name = "mock-json-text"
        else:
            raise DataError(f"--profile-name required; available: {sorted(profiles)}")
    if name not in profiles:
        raise DataError(f"unknown profile {name!r}; available: {sorted(profiles)}")
    profile = profiles[name]
    if config.mock_mode != "off":
        profile = replace(profile, base_url=f"mock://{config.mock_mode}", auth_env_var="")
    return profile


def perception_config(config: RunConfig) -> PerceptionConfig:
    vocab = None
    if config.tag_vocab_path is not None:
        vocab = TagVocabulary.load(config.tag_vocab_path)
    kinds = ("captions", "transcript") + (("audio_tags",) if vocab is not None else ())
    return PerceptionConfig(
        kinds=kinds,
        n_frames=config.n_frames,
        threshold=config.threshold,
        max_tags=config.max_tags,
        backend_id="mock" if config.mock_mode != "off" else "sidecar",
        vocab=vocab,
    )


def sidecar_client_for(config: RunConfig):
    if config.mock_mode != "off":
        return MockSidecarClient()
    return SidecarClient(config.sidecar_url)


def select_records(catalog: list[VideoRecord], config: RunConfig) -> list[VideoRecord]:
    if config.per_class is None:
        return list(catalog)
    return sample_subset(catalog, config.per_class, config.seed)


# ---------------------------------------------------------------------------
# describe
# ---------------------------------------------------------------------------

def describe_run(config: RunConfig, client=None, echo=print) -> tuple[int, int]:
    """Ensure every selected video has a cached DescriptorBundle.

    Returns (new, cached) counts. Progress is preserved per video, so an
    interrupted run resumes where it stopped.
    """
    catalog = load_catalog(config.catalog_path)
    records = select_records(catalog, config)
    cfg = perception_config(config)
    fingerprint = cfg.fingerprint()
    cache = DescriptorCache(config.cache_path)
    if client is None:
        client = sidecar_client_for(config)
    new = cached = 0
    for i, record in enumerate(records, 1):
        if cache.get(record.video_id, fingerprint) is not None:
            cached += 1
        else:
            fetch_descriptors(record, cfg, client, cache)
            new += 1
        if i % 50 == 0:
            echo(f"described {i}/{len(records)}")
    echo(f"{new} new, {cached} cached (fingerprint {fingerprint})")
    return new, cached


# ---------------------------------------------------------------------------
# classify
# ---------------------------------------------------------------------------

def classify_run(config: RunConfig, gateway: ReasoningGateway | None = None, echo=print) -> Path:
    """Produce one raw response and one prediction per selected video.

    Resumable by prompt fingerprint: videos already present in the response
    log are not re-queried, and the predictions file is rewritten
    deterministically from the log at the end of every run.
    """
    catalog = load_catalog(config.catalog_path)
    records = select_records(catalog, config)
    labels = load_label_set(config.labels_path)
    profile = resolve_profile(config)
    cfg = perception_config(config)
    perception_fp = cfg.fingerprint()
    cache = DescriptorCache(config.cache_path)

    missing = [r.video_id for r in records if cache.get(r.video_id, perception_fp) is None]
    if missing:
        raise DataError(
            f"{len(missing)} videos lack descriptors for fingerprint {perception_fp} "
            f"(first: {missing[0]!r}); run describe first"
        )

    config.output_dir.mkdir(parents=True, exist_ok=True)
    config_fp = config.fingerprint()
    log = ResponseLog(config.raw_responses_path, config_fp)
    if gateway is None:
        truths = {r.video_id: r.ground_truth for r in records if r.ground_truth}
        gateway = ReasoningGateway(oracle_truths=truths)

    n_calls = n_reused = n_errors = 0
    prepared = []  # (record, prompt_fingerprint) in deterministic order
    for record in records:
        bundle = cache.get(record.video_id, perception_fp)
        clues = render_clues(bundle, config.context_level)
        spec = build_prompt(clues, labels, profile.dialect, config.temperature)
        prepared.append((record, spec.fingerprint))
        if log.get(record.video_id, spec.fingerprint) is not None:
            n_reused += 1
            continue
        request = build_request(spec, profile, video_id=record.video_id)
        try:
            response = gateway.invoke(request, profile)
        except BackendExhausted as exc:
            n_errors += 1
            echo(f"backend exhausted for {record.video_id}: {exc}")
            continue
        log.append(response, profile.name)
        n_calls += 1

    tmp = config.predictions_path.with_suffix(".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"kind": "predictions", "config_fingerprint": config_fp}) + "\n")
        for record, prompt_fp in prepared:
            raw = log.get(record.video_id, prompt_fp)
            if raw is None:
                prediction = parse_response(
                    profile.dialect, "", None, labels, record.video_id
                )
            else:
                prediction = parse_response(
                    profile.dialect,
                    extract_content(raw.payload),
                    raw.tool_arguments,
                    labels,
                    record.video_id,
                )
            fh.write(json.dumps(prediction_to_record(prediction, labels), ensure_ascii=False) + "\n")
    tmp.replace(config.predictions_path)

    echo(
        f"classified {len(records)} videos: {n_calls} backend calls, "
        f"{n_reused} reused, {n_errors} failed"
    )
    return config.predictions_path


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def _read_predictions(path: Path, expected_fingerprint: str) -> list[dict]:
    if not path.exists():
        raise EmptyResults(f"no predictions found at {path}; run classify first")
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise EmptyResults(f"predictions file {path} is empty")
    header = json.loads(lines[0])
    if header.get("config_fingerprint") != expected_fingerprint:
        raise FingerprintMismatch(
            f"{path} belongs to config {header.get('config_fingerprint')!r}, "
            f"current config is {expected_fingerprint!r}"
        )
    records = [json.loads(ln) for ln in lines[1:]]
    if not records:
        raise EmptyResults(f"predictions file {path} holds no predictions")
    return records


def report_run(config: RunConfig, echo=print) -> EvalReport:
    """Score the run's predictions and write report.json plus a text table."""
    started = _now()
    config_fp = config.fingerprint()
    records = _read_predictions(config.predictions_path, config_fp)
    labels = load_label_set(config.labels_path)
    catalog = {r.video_id: r for r in load_catalog(config.catalog_path)}

    results = []
    for rec in records:
        video = catalog.get(rec["video_id"])
        if video is None or video.ground_truth is None:
            raise DataError(f"prediction for unknown or unlabeled video {rec['video_id']!r}")
        gt_id = match_label(video.ground_truth, labels)
        if gt_id is None:
            raise DataError(
                f"ground truth {video.ground_truth!r} not in label set "
                f"{config.labels_path}"
            )
        prediction = prediction_from_record(rec, labels)
        results.append((prediction, gt_id, video.ground_truth))

    report = compute_metrics(
        results,
        run_id=config.output_dir.name,
        config_fingerprint=config_fp,
        started_at=started,
        finished_at=_now(),
    )
    report.extra["config"] = config.to_dict()

    config.output_dir.mkdir(parents=True, exist_ok=True)
    config.report_path.write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    table = format_comparison([report], title=f"config {config_fp}")
    per_class_lines = [
        f"  {name:<32} n={stats.n:<4d} top1={stats.top1:.4f}"
        for name, stats in report.per_class.items()
    ]
    (config.output_dir / "report.txt").write_text(
        table + "\nper-class top-1:\n" + "\n".join(per_class_lines) + "\n", encoding="utf-8"
    )
    echo(
        f"top1={report.topk_accuracy[1]:.4f} top3={report.topk_accuracy[3]:.4f} "
        f"top5={report.topk_accuracy[5]:.4f} n={report.n_videos} "
        f"parse_failed={report.n_parse_failed}"
    )
    return report


# ---------------------------------------------------------------------------
# ablation sweeps
# ---------------------------------------------------------------------------

def _sub_config(config: RunConfig, axis: str, value) -> RunConfig:
    if axis == "context_level":
        level = value if isinstance(value, ContextLevel) else ContextLevel.parse(str(value))
        sub = config.with_value(context_level=level)
        tag = level.name.lower()
    elif axis == "n_frames":
        sub = config.with_value(n_frames=int(value))
        tag = str(int(value))
    else:
        raise DataError(f"unknown ablation axis {axis!r}; expected {ABLATION_AXES}")
    return sub.with_value(output_dir=config.output_dir / f"{axis}={tag}")


def ablate_run(
    config: RunConfig,
    axis: str,
    values: list,
    gateway: ReasoningGateway | None = None,
    client=None,
    echo=print,
) -> tuple[list[EvalReport], Path]:
    """One full describe+classify+report per axis value, plus a comparison table.

    A value that fails is reported and skipped; the remaining values still
    run. Descriptor work is shared through the common cache whenever the
    perception fingerprint is unchanged (context-level sweeps reuse one
    cache; frame-count sweeps fetch per value).
    """
    if not values:
        raise EmptyResults("ablation needs at least one axis value")
    reports: list[EvalReport] = []
    failures: list[str] = []
    for value in values:
        sub = _sub_config(config, axis, value)
        try:
            describe_run(sub, client=client, echo=echo)
            classify_run(sub, gateway=gateway, echo=echo)
            reports.append(report_run(sub, echo=echo))
        except Exception as exc:  # keep sweeping; one bad value must not abort the rest
            failures.append(f"{axis}={value}: {type(exc).__name__}: {exc}")
            echo(f"ablation value failed: {failures[-1]}")
    config.output_dir.mkdir(parents=True, exist_ok=True)
    comparison_path = config.output_dir / "comparison.txt"
    text = format_comparison(reports, title=f"ablation over {axis} (config {config.fingerprint()})")
    if failures:
        text += "\nfailed values:\n" + "\n".join(f"  {f}" for f in failures) + "\n"
    comparison_path.write_text(text, encoding="utf-8")
    return reports, comparison_path


# ---------------------------------------------------------------------------
# offline re-parse
# ---------------------------------------------------------------------------

def reparse_run(
    raw_log_path: str | Path,
    labels_path: str | Path,
    out_path: str | Path,
    profiles_path: str | Path | None = None,
    echo=print,
) -> Path:
    """Re-run parsing over a raw response log without any network access."""
    raw_log_path = Path(raw_log_path)
    if not raw_log_path.exists():
        raise DataError(f"no raw response log at {raw_log_path}")
    labels = load_label_set(labels_path)
    profiles: dict[str, BackendProfile] = {}
    for mode in ("keyword", "oracle"):
        profiles.update(builtin_mock_profiles(mode))
    if profiles_path is not None:
        profiles.update(load_profiles(profiles_path))

    lines = [ln for ln in raw_log_path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"raw response log {raw_log_path} is empty")
    header = json.loads(lines[0])
    out_path = Path(out_path)
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(
            json.dumps(
                {"kind": "predictions", "config_fingerprint": header.get("config_fingerprint", "")}
            )
            + "\n"
        )
        count = 0
        for line in lines[1:]:
            rec = json.loads(line)
            profile = profiles.get(rec.get("profile", ""))
            if profile is None:
                raise DataError(f"record for {rec['video_id']!r} names unknown profile "
                                f"{rec.get('profile')!r}")
            prediction = parse_response(
                profile.dialect,
                extract_content(rec["payload"]),
                rec.get("tool_arguments"),
                labels,
                rec["video_id"],
            )
            fh.write(json.dumps(prediction_to_record(prediction, labels), ensure_ascii=False) + "\n")
            count += 1
    echo(f"re-parsed {count} responses -> {out_path}")
    return out_path
