import json
import math
import random
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given
from hypothesis import strategies as st

from bibharvest.extract import CANONICAL_FIELDS, CatalogRecord, completion_rate
from bibharvest.metrics import (
    AnomalyWindow,
    EmptyLog,
    InconsistentInputs,
    NotAscending,
    compute_metrics,
    default_gap_threshold,
    detect_anomalies,
    efficiencies,
    format_duration,
    format_percent,
    jump_stats,
    render_report,
)
from bibharvest.store import RunLogEntry

from oracles import brute_force_jumps, summary

T0 = datetime(2024, 7, 16, 15, 47, 57, tzinfo=timezone.utc)


def log_at(offsets, persisted_ids=(), statuses=None):
    entries = []
    for i, off in enumerate(offsets, start=1):
        status = statuses[i - 1] if statuses else "ok"
        entries.append(
            RunLogEntry(T0 + timedelta(seconds=off), i, f"u{i}", status,
                        200 if status == "ok" else 404 if status == "not_found" else None,
                        10, i in persisted_ids, 0)
        )
    return entries


# detect_anomalies


def test_regular_log_has_no_anomalies():
    assert detect_anomalies(log_at([3 * k for k in range(50)]), 60) == []


def test_single_long_gap():
    gap = 4 * 3600 + 25 * 60 + 48
    windows = detect_anomalies(log_at([0, 3, 3 + gap, 6 + gap]), 60)
    assert len(windows) == 1
    assert windows[0].gap == 15948
    assert windows[0].cause == "detected_gap"


def test_threshold_is_strict():
    windows = detect_anomalies(log_at([0, 61, 120]), 60)
    assert [w.gap for w in windows] == [61]
    assert detect_anomalies(log_at([0, 60]), 60) == []


def test_annotated_windows_merge():
    log = log_at([0, 100, 103])
    note = AnomalyWindow(T0 + timedelta(seconds=50), T0 + timedelta(seconds=101), "operator_annotated")
    windows = detect_anomalies(log, 60, [note])
    assert len(windows) == 1
    assert windows[0].start_ts == T0 and windows[0].end_ts == T0 + timedelta(seconds=101)
    assert windows[0].cause == "operator_annotated"


def test_empty_log():
    with pytest.raises(EmptyLog):
        detect_anomalies([], 60)
    with pytest.raises(EmptyLog):
        compute_metrics([], {}, 3)


def test_default_gap_threshold():
    assert default_gap_threshold(3, 30) == 660


# jump_stats


def test_jump_examples():
    assert jump_stats([1, 2, 3, 4]).jump_count == 0
    j = jump_stats([1, 3, 84])
    assert j.sizes == [2, 81] and (j.min_size, j.max_size) == (2, 81)
    assert j.mean_size == 41.5 and j.std_dev_size == 39.5
    assert j.records_per_jump == 1.5


def test_jump_edge_cases():
    assert jump_stats([]).jump_count == 0
    assert jump_stats([7]).records_per_jump is None
    with pytest.raises(NotAscending):
        jump_stats([1, 3, 3])
    with pytest.raises(NotAscending):
        jump_stats([5, 4])


ascending = st.lists(st.integers(0, 5000), unique=True, max_size=300).map(sorted)


@given(ascending)
def test_jump_stats_matches_oracle(ids):
    j = jump_stats(ids)
    sizes = brute_force_jumps(ids)
    assert j.sizes == sizes
    ref = summary(sizes)
    if ref is None:
        assert j.jump_count == 0 and j.mean_size is None
        return
    assert (j.jump_count, j.min_size, j.max_size) == (ref["count"], ref["min"], ref["max"])
    assert math.isclose(j.mean_size, ref["mean"], rel_tol=1e-12)
    assert math.isclose(j.std_dev_size, ref["pstdev"], rel_tol=1e-9, abs_tol=1e-12)


# efficiencies and compute_metrics


def test_published_aggregates():
    ideal, eff, real = efficiencies(55473, 3.0, 60573, 227592)
    assert ideal == 166419
    assert round(eff * 100, 2) == 274.74
    assert round(real * 100, 2) == 73.12


def test_not_found_rate_published():
    assert round(7313 / 62786 * 100, 2) == 11.65


def synthetic_run():
    # Ten stored records 6 s apart and a final 404 at 60 s.
    offsets = [6 * k for k in range(10)] + [60]
    statuses = ["ok"] * 10 + ["not_found"]
    log = log_at(offsets, persisted_ids=set(range(1, 11)), statuses=statuses)
    records = {i: CatalogRecord(url=f"u{i}", title="t", publisher="p" if i % 2 else None) for i in range(1, 11)}
    return log, records


def test_synthetic_run_by_hand():
    log, records = synthetic_run()
    m = compute_metrics(log, records, pause=2.0)
    # 60 s total, 10 x 2 s of pauses, 40 s effective.
    assert m.total_duration == 60
    assert m.scheduled_pause_total == 20
    assert m.effective_time == 40
    assert m.theoretical_ideal == 20
    assert m.effective_efficiency == 0.5
    assert m.real_efficiency == pytest.approx(1 / 3)
    assert m.extraction_rate_per_min == 15.0
    assert m.extraction_rate_per_hour == 900.0
    assert m.total_links == 11 and m.not_found_count == 1
    assert m.not_found_rate == pytest.approx(1 / 11)
    # Five records have title+publisher (2/12), five only title (1/12).
    assert m.mean_completion_rate == pytest.approx((5 * 2 + 5 * 1) / 12 / 10)


def test_metric_identities():
    log, records = synthetic_run()
    m = compute_metrics(log, records, pause=2.0, anomalies=[AnomalyWindow(T0 + timedelta(seconds=6), T0 + timedelta(seconds=12))])
    assert m.adjusted_duration == m.total_duration - m.anomaly_total == 54
    assert m.effective_time == m.adjusted_duration - m.scheduled_pause_total
    assert math.isclose(m.effective_efficiency * m.effective_time, m.theoretical_ideal, rel_tol=1e-9)
    assert math.isclose(m.real_efficiency * m.adjusted_duration, m.theoretical_ideal, rel_tol=1e-9)
    rates = [completion_rate(r) for r in records.values()]
    assert m.mean_completion_rate == pytest.approx(sum(rates) / len(rates), abs=1e-12)
    assert compute_metrics(log, records, 2.0) == compute_metrics(log, records, 2.0)


def test_inconsistent_inputs():
    log, records = synthetic_run()
    records.pop(3)
    with pytest.raises(InconsistentInputs):
        compute_metrics(log, records, 2.0)


def test_slow_attempts():
    log, records = synthetic_run()
    log[2].latency_ms = 20001
    log[3].latency_ms = 20000
    assert compute_metrics(log, records, 2.0, slow_threshold=20).slow_insert_count == 1


def test_effective_time_floors_at_zero():
    log, records = synthetic_run()
    m = compute_metrics(log, records, pause=10.0)
    assert m.effective_time == 0
    assert m.effective_efficiency is None


# rendering


def test_format_helpers():
    assert format_percent(166419 / 60573) == "274.74%"
    assert format_percent(None) == "n/a"
    assert format_duration(15948) == "4:25:48"
    assert format_duration(242940) == "67:29:00"
    assert format_duration(0) == "0:00:00"


def test_zero_record_report():
    log = log_at([0, 1, 2], statuses=["not_found"] * 3)
    m = compute_metrics(log, {}, 3.0)
    text, obj = render_report(m)
    for label in ("Effective efficiency", "Real efficiency", "Mean completion rate", "Extraction rate (records/min)"):
        line = next(l for l in text.splitlines() if l.startswith(label))
        assert line.endswith("n/a")
    json.dumps(obj)


def test_report_object_fields():
    log, records = synthetic_run()
    text, obj = render_report(compute_metrics(log, records, 2.0))
    assert "50.00%" in text and "0:01:00" in text
    assert list(obj) == [
        "total_links", "not_found_count", "not_found_rate", "records_collected", "total_duration",
        "anomaly_total", "adjusted_duration", "scheduled_pause_total", "effective_time",
        "theoretical_ideal", "extraction_rate_per_min", "extraction_rate_per_hour",
        "effective_efficiency", "real_efficiency", "mean_completion_rate", "jumps", "anomalies",
        "slow_insert_count",
    ]
    assert obj["effective_efficiency"] == 0.5
    json.loads(json.dumps(obj))
