"""Harvest performance metrics.

Durations are in seconds, rates are fractions. The two efficiency quotients
share one numerator, the theoretical ideal time (records x pause):

* effective efficiency = ideal / (duration - anomalies - scheduled pauses)
* real efficiency      = ideal / (duration - anomalies)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Mapping, Optional, Sequence

from .extract import DEFAULT_FIELD_SET, CatalogRecord, completion_rate
from .store import RunLogEntry, format_ts

DEFAULT_SLOW_THRESHOLD = 20.0


class MetricsError(Exception):
    pass


class EmptyLog(MetricsError):
    pass


class NotAscending(MetricsError):
    pass


class InconsistentInputs(MetricsError):
    pass


@dataclass
class AnomalyWindow:
    start_ts: datetime
    end_ts: datetime
    cause: str = "detected_gap"

    def __post_init__(self):
        if self.end_ts <= self.start_ts:
            raise ValueError("anomaly window must end after it starts")
        if self.cause not in ("detected_gap", "operator_annotated"):
            raise ValueError(f"unknown anomaly cause {self.cause!r}")

    @property
    def gap(self) -> float:
        return (self.end_ts - self.start_ts).total_seconds()

    def to_dict(self) -> dict:
        return {
            "start_ts": format_ts(self.start_ts),
            "end_ts": format_ts(self.end_ts),
            "gap": self.gap,
            "cause": self.cause,
        }


@dataclass
class JumpStats:
    jump_count: int = 0
    sizes: list[int] = field(default_factory=list)
    min_size: Optional[int] = None
    max_size: Optional[int] = None
    mean_size: Optional[float] = None
    std_dev_size: Optional[float] = None
    records_per_jump: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "jump_count": self.jump_count,
            "sizes": list(self.sizes),
            "min_size": self.min_size,
            "max_size": self.max_size,
            "mean_size": self.mean_size,
            "std_dev_size": self.std_dev_size,
            "records_per_jump": self.records_per_jump,
        }


@dataclass
class RunMetrics:
    total_links: int
    not_found_count: int
    not_found_rate: Optional[float]
    records_collected: int
    total_duration: float
    anomaly_total: float
    adjusted_duration: float
    scheduled_pause_total: float
    effective_time: float
    theoretical_ideal: float
    extraction_rate_per_min: Optional[float]
    extraction_rate_per_hour: Optional[float]
    effective_efficiency: Optional[float]
    real_efficiency: Optional[float]
    mean_completion_rate: Optional[float]
    jumps: JumpStats
    anomalies: list[AnomalyWindow]
    slow_insert_count: int

    def to_dict(self) -> dict:
        out = {}
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            if name == "jumps":
                value = value.to_dict()
            elif name == "anomalies":
                value = [w.to_dict() for w in value]
            out[name] = value
        return out


def _ratio(num: float, den: float) -> Optional[float]:
    return num / den if den > 0 else None


def efficiencies(
    records: int, pause: float, effective_time: float, adjusted_duration: float
) -> tuple[float, Optional[float], Optional[float]]:
    """Return ``(theoretical_ideal, effective_efficiency, real_efficiency)``.

    Usable directly on published aggregates, without a run log.
    """
    ideal = records * pause
    return ideal, _ratio(ideal, effective_time), _ratio(ideal, adjusted_duration)


def default_gap_threshold(pause: float, request_timeout: float) -> float:
    return 20.0 * (pause + request_timeout)


def _merge(windows: list[AnomalyWindow]) -> list[AnomalyWindow]:
    merged: list[AnomalyWindow] = []
    for w in sorted(windows, key=lambda w: (w.start_ts, w.end_ts)):
        if merged and w.start_ts <= merged[-1].end_ts:
            last = merged[-1]
            cause = (
                "operator_annotated"
                if "operator_annotated" in (last.cause, w.cause)
                else "detected_gap"
            )
            merged[-1] = AnomalyWindow(last.start_ts, max(last.end_ts, w.end_ts), cause)
        else:
            merged.append(w)
    return merged


def detect_anomalies(
    run_log: Sequence[RunLogEntry],
    gap_threshold: float,
    annotated: Iterable[AnomalyWindow] = (),
) -> list[AnomalyWindow]:
    """Flag every gap between consecutive log entries longer than ``gap_threshold``.

    Operator-annotated windows are merged in; overlapping windows collapse
    into one.
    """
    if not run_log:
        raise EmptyLog("run log is empty")
    windows = []
    for prev, cur in zip(run_log, run_log[1:]):
        if cur.ts < prev.ts:
            raise MetricsError(f"timestamps go backwards at id {cur.id}")
        if (cur.ts - prev.ts).total_seconds() > gap_threshold:
            windows.append(AnomalyWindow(prev.ts, cur.ts, "detected_gap"))
    annotated = [
        AnomalyWindow(w.start_ts, w.end_ts, "operator_annotated") for w in annotated
    ]
    return _merge(windows + annotated)


def jump_stats(persisted_ids: Sequence[int]) -> JumpStats:
    """Statistics of the gaps (>= 2) between consecutive persisted ids.

    The standard deviation is the population one.
    """
    sizes = []
    for a, b in zip(persisted_ids, persisted_ids[1:]):
        if b <= a:
            raise NotAscending(f"ids not strictly ascending at {a}, {b}")
        if b - a >= 2:
            sizes.append(b - a)
    stats = JumpStats(jump_count=len(sizes), sizes=sizes)
    if not sizes:
        return stats
    # Welford keeps the variance accurate for long runs of similar sizes.
    mean = 0.0
    m2 = 0.0
    for k, size in enumerate(sizes, start=1):
        delta = size - mean
        mean += delta / k
        m2 += delta * (size - mean)
    stats.min_size = min(sizes)
    stats.max_size = max(sizes)
    stats.mean_size = mean
    stats.std_dev_size = math.sqrt(m2 / len(sizes))
    stats.records_per_jump = len(persisted_ids) / len(sizes)
    return stats


def compute_metrics(
    run_log: Sequence[RunLogEntry],
    records: Mapping[int, CatalogRecord],
    pause: float,
    anomalies: Sequence[AnomalyWindow] = (),
    slow_threshold: float = DEFAULT_SLOW_THRESHOLD,
    field_set: Sequence[str] = DEFAULT_FIELD_SET,
) -> RunMetrics:
    """Compute every run metric from a run log and the stored records.

    Raises:
        EmptyLog: ``run_log`` has no entries.
        InconsistentInputs: the ids marked persisted in the log differ from
            the stored record ids.
    """
    if not run_log:
        raise EmptyLog("run log is empty")
    logged = {e.id for e in run_log if e.persisted}
    stored = set(records)
    if logged != stored:
        only_log = sorted(logged - stored)[:5]
        only_db = sorted(stored - logged)[:5]
        raise InconsistentInputs(
            f"persisted ids differ: in log only {only_log}, in dataset only {only_db}"
        )

    total_links = len(run_log)
    not_found = sum(1 for e in run_log if e.status == "not_found")
    collected = len(records)

    total_duration = (run_log[-1].ts - run_log[0].ts).total_seconds()
    anomaly_total = sum(w.gap for w in anomalies)
    adjusted = total_duration - anomaly_total
    pause_total = collected * pause
    effective = max(0.0, adjusted - pause_total)
    ideal, eff, real = efficiencies(collected, pause, effective, adjusted)
    per_min = _ratio(collected, effective / 60.0)
    if collected == 0:
        eff = real = per_min = None
    rates = [completion_rate(records[i], field_set) for i in sorted(records)]

    return RunMetrics(
        total_links=total_links,
        not_found_count=not_found,
        not_found_rate=_ratio(not_found, total_links),
        records_collected=collected,
        total_duration=total_duration,
        anomaly_total=anomaly_total,
        adjusted_duration=adjusted,
        scheduled_pause_total=pause_total,
        effective_time=effective,
        theoretical_ideal=ideal,
        extraction_rate_per_min=per_min,
        extraction_rate_per_hour=None if per_min is None else per_min * 60.0,
        effective_efficiency=eff,
        real_efficiency=real,
        mean_completion_rate=math.fsum(rates) / len(rates) if rates else None,
        jumps=jump_stats(sorted(records)),
        anomalies=list(anomalies),
        slow_insert_count=sum(1 for e in run_log if e.latency_ms > slow_threshold * 1000),
    )


def format_duration(seconds: float) -> str:
    """``H:MM:SS`` with unbounded hours, e.g. 242940 -> ``67:29:00``."""
    total = int(round(seconds))
    sign = "-" if total < 0 else ""
    total = abs(total)
    hours, rest = divmod(total, 3600)
    minutes, secs = divmod(rest, 60)
    return f"{sign}{hours}:{minutes:02d}:{secs:02d}"


def format_percent(value: Optional[float]) -> str:
    if value is None or not math.isfinite(value):
        return "n/a"
    return f"{value * 100:.2f}%"


def _fmt_number(value: Optional[float], digits: int = 2) -> str:
    if value is None:
        return "n/a"
    return f"{value:,.{digits}f}"


def render_report(metrics: RunMetrics) -> tuple[str, dict]:
    """Two-column text table plus a JSON-ready dict in base units."""
    j = metrics.jumps
    rows = [
        ("Total number of links reviewed", f"{metrics.total_links:,}"),
        ("404 links", f"{metrics.not_found_count:,} ({format_percent(metrics.not_found_rate)})"),
        ("Total records collected", f"{metrics.records_collected:,}"),
        ("Total duration", format_duration(metrics.total_duration)),
        ("Number of service anomalies", str(len(metrics.anomalies))),
        ("Duration of the anomalies", format_duration(metrics.anomaly_total)),
        ("Total duration discounting anomalies", format_duration(metrics.adjusted_duration)),
        ("Total time of scheduled breaks", format_duration(metrics.scheduled_pause_total)),
        ("Effective scraping time", format_duration(metrics.effective_time)),
        ("Theoretical ideal time", format_duration(metrics.theoretical_ideal)),
        ("Extraction rate (records/min)", _fmt_number(metrics.extraction_rate_per_min)),
        ("Extraction rate (records/hour)", _fmt_number(metrics.extraction_rate_per_hour)),
        ("Effective efficiency", format_percent(metrics.effective_efficiency)),
        ("Real efficiency", format_percent(metrics.real_efficiency)),
        ("Mean completion rate", format_percent(metrics.mean_completion_rate)),
        ("Jumps in record numbering", f"{j.jump_count:,}"),
        (
            "Jump size min / max",
            "n/a" if j.min_size is None else f"{j.min_size} / {j.max_size}",
        ),
        ("Jump size mean", _fmt_number(j.mean_size, 4)),
        ("Jump size std. dev. (population)", _fmt_number(j.std_dev_size, 4)),
        ("Records per jump", _fmt_number(j.records_per_jump, 4)),
        ("Slow attempts", f"{metrics.slow_insert_count:,}"),
    ]
    width = max(len(name) for name, _ in rows)
    lines = [f"{'Metric'.ljust(width)}  Value", f"{'-' * width}  {'-' * 5}"]
    lines += [f"{name.ljust(width)}  {value}" for name, value in rows]
    return "\n".join(lines) + "\n", metrics.to_dict()

