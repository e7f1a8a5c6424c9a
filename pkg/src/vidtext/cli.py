"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 upstream backend failure,
3 data/contract violation.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
from filelock import FileLock, Timeout

from . import runner
from .config import MOCK_MODES, RunConfig
from .errors import BackendError, DataError
from .labels import load_label_set
from .perception import DescriptorCache
from .prompts import ContextLevel, build_prompt, render_clues

_LEVEL_NAMES = [lvl.name.lower() for lvl in ContextLevel]


def _config_options(fn):
    """Shared flags mirroring RunConfig fields in kebab-case."""
    options = [
        click.option("--catalog-path", type=click.Path(exists=True, path_type=Path), required=True),
        click.option("--labels-path", type=click.Path(exists=True, path_type=Path), required=True),
        click.option("--cache-path", type=click.Path(path_type=Path), required=True),
        click.option("--profiles-path", type=click.Path(exists=True, path_type=Path), default=None),
        click.option("--output-dir", type=click.Path(path_type=Path), required=True),
        click.option("--profile-name", default=""),
        click.option(
            "--context-level",
            type=click.Choice(_LEVEL_NAMES),
            default="captions_speech_audio",
            show_default=True,
        ),
        click.option("--n-frames", type=int, default=5, show_default=True),
        click.option("--threshold", type=float, default=0.2, show_default=True),
        click.option("--max-tags", type=int, default=5, show_default=True),
        click.option("--per-class", type=int, default=None),
        click.option("--seed", type=int, default=42, show_default=True),
        click.option("--temperature", type=float, default=0.0, show_default=True),
        click.option("--mock-mode", type=click.Choice(MOCK_MODES), default="off", show_default=True),
        click.option("--tag-vocab-path", type=click.Path(exists=True, path_type=Path), default=None),
        click.option("--sidecar-url", default="http://127.0.0.1:8008", show_default=True),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _build_config(kwargs) -> RunConfig:
    kwargs = dict(kwargs)
    kwargs["context_level"] = ContextLevel.parse(kwargs["context_level"])
    try:
        return RunConfig(**kwargs)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc


class _RunLock:
    """Advisory lock: one subcommand at a time per run directory."""

    def __init__(self, output_dir: Path):
        output_dir.mkdir(parents=True, exist_ok=True)
        self._lock = FileLock(str(output_dir / ".vidtext.lock"))

    def __enter__(self):
        try:
            self._lock.acquire(timeout=1.0)
        except Timeout:
            raise DataError(f"another run is writing to {Path(self._lock.lock_file).parent}")
        return self

    def __exit__(self, *exc):
        self._lock.release()


@click.group()
def cli():
    """Video action classification through textual descriptors."""


@cli.command()
@_config_options
def describe(**kwargs):
    """Fill the descriptor cache for every selected catalog video."""
    config = _build_config(kwargs)
    with _RunLock(config.output_dir):
        runner.describe_run(config, echo=click.echo)


@cli.command()
@_config_options
def classify(**kwargs):
    """Query the reasoning backend and write raw responses plus predictions."""
    config = _build_config(kwargs)
    with _RunLock(config.output_dir):
        runner.classify_run(config, echo=click.echo)


@cli.command()
@_config_options
def report(**kwargs):
    """Score predictions into report.json and an aligned text table."""
    config = _build_config(kwargs)
    with _RunLock(config.output_dir):
        runner.report_run(config, echo=click.echo)


@cli.command()
@click.option("--axis", type=click.Choice(runner.ABLATION_AXES), required=True)
@click.option(
    "--values",
    required=True,
    help="Comma-separated axis values, e.g. 'captions,captions_speech' or '1,5,10'.",
)
@_config_options
def ablate(axis, values, **kwargs):
    """Sweep one axis: a full run per value plus a comparison table."""
    config = _build_config(kwargs)
    value_list = [v.strip() for v in values.split(",") if v.strip()]
    with _RunLock(config.output_dir):
        reports, comparison_path = runner.ablate_run(config, axis, value_list, echo=click.echo)
    click.echo(comparison_path.read_text(encoding="utf-8").rstrip("\n"))
    if len(reports) < len(value_list):
        raise BackendError(f"{len(value_list) - len(reports)} ablation values failed")


@cli.command("show-prompt")
@click.option("--video-id", required=True)
@_config_options
def show_prompt(video_id, **kwargs):
    """Render and print the prompt for one cached video (debugging aid)."""
    config = _build_config(kwargs)
    cache = DescriptorCache(config.cache_path)
    fingerprint = runner.perception_config(config).fingerprint()
    bundle = cache.get(video_id, fingerprint)
    if bundle is None:
        raise DataError(f"no cached descriptors for {video_id!r} (fingerprint {fingerprint})")
    labels = load_label_set(config.labels_path)
    profile = runner.resolve_profile(config)
    clues = render_clues(bundle, config.context_level)
    spec = build_prompt(clues, labels, profile.dialect, config.temperature)
    click.echo(f"# dialect: {spec.dialect.value}   fingerprint: {spec.fingerprint}")
    click.echo("# system:")
    click.echo(spec.system_text)
    click.echo("# user:")
    click.echo(spec.user_text)
    if spec.label_enum is not None:
        click.echo(f"# enum ({len(spec.label_enum)} labels): {', '.join(spec.label_enum)}")


@cli.command()
@click.option("--raw-log", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--labels-path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--profiles-path", type=click.Path(exists=True, path_type=Path), default=None)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def reparse(raw_log, labels_path, profiles_path, out):
    """Re-parse a raw response log into predictions, offline."""
    runner.reparse_run(raw_log, labels_path, out, profiles_path=profiles_path, echo=click.echo)


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Abort:
        return 1
    except BackendError as exc:
        click.echo(f"backend failure: {exc}", err=True)
        return 2
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
