"""Command-line entry point: ``bibharvest``.

Exit codes: 0 success, 2 configuration or usage error, 3 runtime or sink
error, 4 harvest stopped by the consecutive-error threshold.
"""

from __future__ import annotations

import json
import logging
import signal
import sys
import threading
from contextlib import contextmanager
from pathlib import Path
from typing import Optional

import click

from . import mockcat
from .config import ConfigError, ToolConfig, load_config
from .crawl import CrawlConfig, SinkFailure, fetch, run_crawl
from .extract import DEFAULT_LABEL_MAP, UnparseableInput, extract_record
from .metrics import (
    DEFAULT_SLOW_THRESHOLD,
    MetricsError,
    compute_metrics,
    default_gap_threshold,
    detect_anomalies,
    render_report,
)
from .promptgen import BUILTIN_SPECS, InvalidSpec, load_spec, render_prompt, validate_spec
from .store import Dataset, RunLogParseError, StoreError, open_dataset, read_run_log

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_THRESHOLD = 4

logger = logging.getLogger("bibharvest")


class Context:
    def __init__(self, config_path: Optional[str], seed: Optional[int], quiet: bool):
        self.config_path = config_path
        self.seed = seed
        self.quiet = quiet

    def config(self, overrides=()) -> Optional[ToolConfig]:
        if self.config_path is None:
            return None
        return load_config(self.config_path, overrides)


def _fail(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_config_or_exit(ctx: Context, overrides=()) -> Optional[ToolConfig]:
    try:
        return ctx.config(overrides)
    except ConfigError as exc:
        _fail(f"config {exc}", EXIT_CONFIG)


@contextmanager
def _interrupt_sets(event: threading.Event):
    """Route SIGINT to ``event`` so the crawl can stop between records."""
    if threading.current_thread() is not threading.main_thread():
        yield
        return

    def handler(signum, frame):
        click.echo("interrupt received; finishing the current record", err=True)
        event.set()

    previous = signal.signal(signal.SIGINT, handler)
    try:
        yield
    finally:
        signal.signal(signal.SIGINT, previous)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML configuration file.")
@click.option("--seed", type=int, default=None, help="Override the seed of mock-catalogue scenarios.")
@click.option("--quiet", is_flag=True, help="Only print results and errors.")
@click.pass_context
def main(click_ctx, config_path, seed, quiet):
    """Harvest label-table catalogue records, report on runs and render prompts."""
    logging.basicConfig(
        level=logging.WARNING if quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    click_ctx.obj = Context(config_path, seed, quiet)


@main.command()
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE", help="Override a config value by dotted path, e.g. crawl.pause=0.")
@click.option("--resume", is_flag=True, help="Continue after the last id in the existing run log.")
@click.pass_obj
def harvest(ctx: Context, overrides, resume):
    """Crawl the configured id range and store titled records."""
    if ctx.config_path is None:
        _fail("harvest needs --config", EXIT_CONFIG)
    config = _load_config_or_exit(ctx, overrides)
    run_log_path = Path(config.store.run_log_path)
    if not resume and run_log_path.exists() and run_log_path.stat().st_size > 0:
        _fail(f"{run_log_path} already has entries; pass --resume or choose a new path", EXIT_CONFIG)
    stop = threading.Event()
    try:
        with Dataset(config.store.dataset_path, run_log_path) as dataset, _interrupt_sets(stop):
            summary = run_crawl(
                config.crawl, config.label_map, dataset, dataset, resume=resume, stop_event=stop
            )
    except SinkFailure as exc:
        _print_summary(exc.summary)
        _fail(str(exc), EXIT_RUNTIME)
    except (StoreError, OSError) as exc:
        _fail(str(exc), EXIT_RUNTIME)
    _print_summary(summary)
    if summary.stop_reason == "error_threshold":
        sys.exit(EXIT_THRESHOLD)


def _print_summary(summary) -> None:
    for key, value in summary.to_dict().items():
        click.echo(f"{key}: {value}")


@main.command()
@click.argument("source")
@click.pass_obj
def extract(ctx: Context, source):
    """Extract one record from a URL or a local HTML file."""
    config = _load_config_or_exit(ctx)
    label_map = config.label_map if config else DEFAULT_LABEL_MAP
    if source.startswith(("http://", "https://", "file://")):
        crawl = config.crawl if config else CrawlConfig("{number}", 0, 0)
        outcome = fetch(source, crawl)
        if outcome.status != "ok":
            _fail(f"fetch failed: {outcome.status} {outcome.http_status or ''} {outcome.detail or ''}".rstrip(), EXIT_RUNTIME)
        html, url = outcome.body, source
    else:
        try:
            html = Path(source).read_bytes().decode("utf-8", errors="replace")
        except OSError as exc:
            _fail(f"cannot read {source}: {exc}", EXIT_RUNTIME)
        url = Path(source).resolve().as_uri()
    try:
        result = extract_record(html, url, label_map)
    except UnparseableInput as exc:
        _fail(f"cannot parse {source}: {exc}", EXIT_RUNTIME)
    populated = result.record.populated()
    if not populated:
        click.echo("no fields extracted")
    for key, value in populated:
        click.echo(f"{key}: {value}")
    click.echo(json.dumps(result.record.to_dict(), ensure_ascii=False, indent=2))
    if result.unknown_labels and not ctx.quiet:
        click.echo(f"unknown labels: {', '.join(result.unknown_labels)}", err=True)


@main.command()
@click.argument("run_log_path", type=click.Path(dir_okay=False))
@click.argument("dataset_path", type=click.Path(dir_okay=False))
@click.option("--pause-ms", type=click.IntRange(min=0), default=None, help="Scheduled pause per record (default: config or 3000).")
@click.option("--gap-threshold-ms", type=click.IntRange(min=0), default=None, help="Gap that counts as a service anomaly.")
@click.option("--slow-threshold-ms", type=click.IntRange(min=0), default=None, help="Latency that counts as a slow attempt.")
@click.option("--json-out", type=click.Path(dir_okay=False), default=None, help="Also write the metrics object to this file.")
@click.pass_obj
def report(ctx: Context, run_log_path, dataset_path, pause_ms, gap_threshold_ms, slow_threshold_ms, json_out):
    """Compute run metrics from a run log and a record database."""
    config = _load_config_or_exit(ctx)
    pause = pause_ms / 1000.0 if pause_ms is not None else (config.crawl.pause if config else 3.0)
    timeout = config.crawl.request_timeout if config else 30.0
    if gap_threshold_ms is not None:
        gap_threshold = gap_threshold_ms / 1000.0
    elif config and config.metrics.gap_threshold is not None:
        gap_threshold = config.metrics.gap_threshold
    else:
        gap_threshold = default_gap_threshold(pause, timeout)
    if slow_threshold_ms is not None:
        slow = slow_threshold_ms / 1000.0
    else:
        slow = config.metrics.slow_threshold if config else DEFAULT_SLOW_THRESHOLD
    annotated = config.metrics.annotated_anomalies if config else []
    field_set = config.metrics.field_set if config else None

    try:
        run_log = read_run_log(run_log_path)
        with open_dataset(dataset_path) as dataset:
            records = dataset.records()
    except RunLogParseError as exc:
        _fail(f"{run_log_path}: {exc}", EXIT_RUNTIME)
    except (StoreError, OSError) as exc:
        _fail(str(exc), EXIT_RUNTIME)
    try:
        anomalies = detect_anomalies(run_log, gap_threshold, annotated)
        kwargs = {"field_set": field_set} if field_set else {}
        metrics = compute_metrics(run_log, records, pause, anomalies, slow, **kwargs)
    except MetricsError as exc:
        _fail(str(exc), EXIT_RUNTIME)
    text, obj = render_report(metrics)
    click.echo(text, nl=False)
    if json_out:
        Path(json_out).write_text(json.dumps(obj, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


@main.command()
@click.argument("spec")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write the prompt here instead of stdout.")
@click.pass_obj
def prompt(ctx: Context, spec, out):
    """Render a five-section prompt from a spec name or YAML file.

    Built-in specs: scraper_single, scraper_loop.
    """
    config = _load_config_or_exit(ctx)
    try:
        if config and spec in config.prompt_specs:
            prompt_spec = config.prompt_specs[spec]
        elif spec in BUILTIN_SPECS or Path(spec).is_file():
            prompt_spec = load_spec(spec)
        else:
            _fail(f"unknown prompt spec {spec!r} (built-in: {', '.join(BUILTIN_SPECS)})", EXIT_CONFIG)
    except InvalidSpec as exc:
        _fail(str(exc), EXIT_CONFIG)
    violations = validate_spec(prompt_spec)
    if violations:
        for v in violations:
            click.echo(f"violation: {v}", err=True)
        sys.exit(EXIT_CONFIG)
    text = render_prompt(prompt_spec)
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


@main.group()
def fixtures():
    """Generate or serve a mock catalogue."""


def _scenario(ctx: Context, path):
    try:
        scenario = mockcat.load_scenario(path)
    except (mockcat.InvalidScenario, OSError) as exc:
        _fail(f"scenario {path}: {exc}", EXIT_CONFIG)
    if ctx.seed is not None:
        scenario.seed = ctx.seed
    return scenario


@fixtures.command("generate")
@click.argument("scenario_path", type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Directory for pages and manifest.json.")
@click.pass_obj
def fixtures_generate(ctx: Context, scenario_path, out_dir):
    """Write pages and manifest.json for a scenario."""
    scenario = _scenario(ctx, scenario_path)
    pages, manifest = mockcat.generate_pages(scenario)
    template = mockcat.materialize(pages, manifest, out_dir, scenario)
    click.echo(f"pages: {len(pages)}")
    click.echo(f"url_template: {template}")


@fixtures.command("serve")
@click.argument("scenario_path", type=click.Path(dir_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=click.IntRange(0, 65535), default=8080, show_default=True)
@click.pass_obj
def fixtures_serve(ctx: Context, scenario_path, host, port):
    """Serve a scenario over HTTP until interrupted."""
    scenario = _scenario(ctx, scenario_path)
    pages, _ = mockcat.generate_pages(scenario)
    try:
        server = mockcat.serve(pages, scenario, host, port)
    except mockcat.PortUnavailable as exc:
        _fail(str(exc), EXIT_RUNTIME)
    click.echo(f"serving {len(pages)} pages; url_template: {server.url_template}")
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()


if __name__ == "__main__":
    main()
