"""YAML tool configuration.

Keys mirror the dataclass fields. Durations in the file are integer
milliseconds; the library works in seconds. Command-line overrides use dotted
paths such as ``crawl.pause=0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence, Union

import yaml

from .crawl import ConfigInvalid, CrawlConfig
from .extract import CANONICAL_FIELDS, DEFAULT_FIELD_SET, DEFAULT_LABEL_MAP, LabelMap
from .metrics import DEFAULT_SLOW_THRESHOLD, AnomalyWindow
from .promptgen import InvalidSpec, PromptSpec
from .store import parse_ts

CRAWL_MS_KEYS = ("pause", "request_timeout")
CRAWL_KEYS = (
    "url_template",
    "start_id",
    "end_id",
    "pad_width",
    "pause",
    "pause_scope",
    "target_count",
    "request_timeout",
    "max_consecutive_errors",
    "follow_redirects",
    "user_agent",
)
TOP_KEYS = ("crawl", "label_map", "store", "metrics", "prompt_specs")


class ConfigError(Exception):
    """Invalid configuration; ``path`` is the dotted key at fault."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class StoreConfig:
    dataset_path: str
    run_log_path: str


@dataclass
class MetricsConfig:
    gap_threshold: Optional[float] = None  # seconds; None -> derived from the crawl
    slow_threshold: float = DEFAULT_SLOW_THRESHOLD
    field_set: tuple[str, ...] = DEFAULT_FIELD_SET
    annotated_anomalies: list[AnomalyWindow] = field(default_factory=list)


@dataclass
class ToolConfig:
    crawl: CrawlConfig
    store: StoreConfig
    label_map: LabelMap = DEFAULT_LABEL_MAP
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    prompt_specs: dict[str, PromptSpec] = field(default_factory=dict)


def apply_overrides(data: dict, overrides: Sequence[str]) -> dict:
    """Apply ``a.b.c=value`` overrides in place; values are parsed as YAML scalars."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like key.path=value")
        path, raw = item.split("=", 1)
        keys = path.strip().split(".")
        if not all(keys):
            raise ConfigError(path, "empty key in override path")
        node = data
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(path, f"{key} is not a section")
        node[keys[-1]] = yaml.safe_load(raw) if raw != "" else ""
    return data


def _ms(value: Any, path: str) -> float:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(path, "duration must be an integer number of milliseconds")
    if value < 0:
        raise ConfigError(path, "duration must be non-negative")
    return value / 1000.0


def _section(data: Mapping, key: str, required: bool) -> Mapping:
    value = data.get(key)
    if value is None:
        if required:
            raise ConfigError(key, "section is required")
        return {}
    if not isinstance(value, Mapping):
        raise ConfigError(key, "must be a mapping")
    return value


def _crawl(data: Mapping) -> CrawlConfig:
    unknown = sorted(set(data) - set(CRAWL_KEYS))
    if unknown:
        raise ConfigError(f"crawl.{unknown[0]}", "unknown key")
    kwargs = {}
    for key in CRAWL_KEYS:
        if key in data:
            value = data[key]
            if key in CRAWL_MS_KEYS:
                value = _ms(value, f"crawl.{key}")
            kwargs[key] = value
    for key in ("url_template", "start_id", "end_id"):
        if key not in kwargs:
            raise ConfigError(f"crawl.{key}", "is required")
    config = CrawlConfig(**kwargs)
    try:
        config.validate("crawl")
    except ConfigInvalid as exc:
        raise ConfigError(exc.path, str(exc).split(": ", 1)[1]) from exc
    return config


def _anomalies(items, path: str) -> list[AnomalyWindow]:
    windows = []
    for i, item in enumerate(items or []):
        try:
            start, end = item["start_ts"], item["end_ts"]
            start = start if isinstance(start, datetime) else parse_ts(str(start))
            end = end if isinstance(end, datetime) else parse_ts(str(end))
            windows.append(AnomalyWindow(start, end, "operator_annotated"))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{path}[{i}]", str(exc)) from exc
    return windows


def parse_config(data: Mapping) -> ToolConfig:
    if not isinstance(data, Mapping):
        raise ConfigError("<root>", "configuration must be a mapping")
    unknown = sorted(set(data) - set(TOP_KEYS))
    if unknown:
        raise ConfigError(unknown[0], "unknown section")

    crawl = _crawl(_section(data, "crawl", required=True))

    store_data = _section(data, "store", required=True)
    for key in ("dataset_path", "run_log_path"):
        if not store_data.get(key):
            raise ConfigError(f"store.{key}", "must be a non-empty path")
    store = StoreConfig(str(store_data["dataset_path"]), str(store_data["run_log_path"]))

    label_map = DEFAULT_LABEL_MAP
    if data.get("label_map") is not None:
        try:
            label_map = LabelMap.from_pairs(data["label_map"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("label_map", str(exc)) from exc

    m = _section(data, "metrics", required=False)
    metrics = MetricsConfig()
    if m.get("gap_threshold") is not None:
        metrics.gap_threshold = _ms(m["gap_threshold"], "metrics.gap_threshold")
    if m.get("slow_threshold") is not None:
        metrics.slow_threshold = _ms(m["slow_threshold"], "metrics.slow_threshold")
    if m.get("field_set") is not None:
        fs = m["field_set"]
        if not isinstance(fs, list) or not fs:
            raise ConfigError("metrics.field_set", "must be a non-empty list")
        bad = [k for k in fs if k not in CANONICAL_FIELDS]
        if bad:
            raise ConfigError("metrics.field_set", f"unknown field {bad[0]!r}")
        metrics.field_set = tuple(fs)
    metrics.annotated_anomalies = _anomalies(
        m.get("annotated_anomalies"), "metrics.annotated_anomalies"
    )

    specs = {}
    for name, spec in (_section(data, "prompt_specs", required=False)).items():
        try:
            specs[name] = PromptSpec.from_dict(spec)
        except InvalidSpec as exc:
            raise ConfigError(f"prompt_specs.{name}", str(exc)) from exc

    return ToolConfig(crawl, store, label_map, metrics, specs)


def read_config_data(path: Union[str, Path]) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"invalid YAML: {exc}") from exc
    return data if data is not None else {}


def load_config(path: Union[str, Path], overrides: Sequence[str] = ()) -> ToolConfig:
    data = read_config_data(path)
    if not isinstance(data, dict):
        raise ConfigError("<root>", "configuration must be a mapping")
    return parse_config(apply_overrides(data, overrides))
