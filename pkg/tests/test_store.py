import csv
import io
import json
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bibharvest.extract import CANONICAL_FIELDS, RECORD_FIELDS, CatalogRecord
from bibharvest.store import (
    Dataset,
    DuplicateId,
    NonMonotoneTimestamp,
    NotPersistable,
    RunLogEntry,
    RunLogParseError,
    format_ts,
    parse_csv,
    parse_run_log,
    read_run_log,
)

from conftest import RECORD_VALUES

T0 = datetime(2024, 7, 16, 15, 47, 57, tzinfo=timezone.utc)


def entry(i, ts=T0, status="ok", persisted=False, **kw):
    return RunLogEntry(
        ts=ts,
        id=i,
        url=f"http://x/{i}",
        status=status,
        http_status=kw.pop("http_status", 200 if status == "ok" else 404 if status == "not_found" else None),
        latency_ms=kw.pop("latency_ms", 12),
        persisted=persisted,
        fields_present=kw.pop("fields_present", 0),
    )


def fig1_record():
    return CatalogRecord(url="https://datos.bne.es/edicion/bimo0001291967.html", **RECORD_VALUES)


def test_insert_record():
    ds = Dataset()
    ds.insert_record(1291967, fig1_record())
    assert len(ds) == 1
    assert ds.records()[1291967] == fig1_record()


def test_duplicate_id():
    ds = Dataset()
    ds.insert_record(1, fig1_record())
    with pytest.raises(DuplicateId):
        ds.insert_record(1, fig1_record())


def test_titleless_record_rejected():
    with pytest.raises(NotPersistable):
        Dataset().insert_record(1, CatalogRecord(url="u", publisher="Castro"))


def test_records_in_id_order():
    ds = Dataset()
    for i in (5, 1, 3):
        ds.insert_record(i, CatalogRecord(url=str(i), title=str(i)))
    assert list(ds.records()) == [1, 3, 5]


def test_append_log():
    ds = Dataset()
    ds.append_log(entry(1))
    assert len(ds.run_log()) == 1
    ds.append_log(entry(2, T0 + timedelta(seconds=1)))
    ds.append_log(entry(3, T0 + timedelta(seconds=1)))
    assert [e.id for e in ds.run_log()] == [1, 2, 3]
    with pytest.raises(NonMonotoneTimestamp):
        ds.append_log(entry(4, T0))


def test_log_entry_invariants():
    with pytest.raises(ValueError):
        entry(1, status="not_found", persisted=True)
    with pytest.raises(ValueError):
        entry(1, fields_present=13)


def test_ts_format():
    assert format_ts(T0) == "2024-07-16T15:47:57.000Z"
    assert format_ts(T0.replace(microsecond=123456)) == "2024-07-16T15:47:57.123Z"


def test_export_run_log():
    ds = Dataset()
    assert ds.export_run_log() == b""
    ds.append_log(entry(1))
    lines = ds.export_run_log().decode().splitlines()
    assert len(lines) == 1
    assert '"status":"ok"' in lines[0]
    assert list(json.loads(lines[0])) == [
        "ts", "id", "url", "status", "http_status", "latency_ms", "persisted", "fields_present",
    ]
    assert json.loads(lines[0])["ts"] == "2024-07-16T15:47:57.000Z"


def test_run_log_round_trip():
    ds = Dataset()
    for i in range(20):
        ds.append_log(
            entry(i, T0 + timedelta(milliseconds=250 * i), status=("ok", "not_found", "error")[i % 3],
                  persisted=i % 3 == 0, fields_present=i % 13)
        )
    assert parse_run_log(ds.export_run_log()) == ds.run_log()


def test_run_log_parse_error_has_line_number():
    good = entry(1).to_json()
    with pytest.raises(RunLogParseError) as err:
        parse_run_log(f"{good}\n\n{{not json\n")
    assert err.value.line_no == 3
    with pytest.raises(RunLogParseError) as err:
        parse_run_log(good.replace('"status":"ok"', '"status":"weird"'))
    assert err.value.line_no == 1


def test_log_file_persists_and_reopens(tmp_path):
    log = tmp_path / "run.jsonl"
    with Dataset(tmp_path / "db.sqlite", log) as ds:
        ds.append_log(entry(1))
        ds.insert_record(1, fig1_record())
    assert read_run_log(log) == [entry(1)]
    with Dataset(tmp_path / "db.sqlite", log) as ds:
        assert ds.last_log_entry() == entry(1)
        assert list(ds.records()) == [1]
        ds.append_log(entry(2, T0 + timedelta(seconds=3)))
    assert [e.id for e in read_run_log(log)] == [1, 2]
    assert log.read_bytes().endswith(b"\n") and b"\r" not in log.read_bytes()


def test_export_csv_empty():
    assert Dataset().export_csv() == (",".join(RECORD_FIELDS) + "\r\n").encode()


def test_export_csv_sample_record():
    ds = Dataset()
    ds.insert_record(1291967, fig1_record())
    rows = list(csv.reader(io.StringIO(ds.export_csv().decode("utf-8"))))
    assert rows[0] == list(RECORD_FIELDS)
    assert rows[1][3:6] == ["Madrid", "Castro", "1934"]
    assert rows[1][1] == ""  # author absent


def test_export_csv_quoting():
    ds = Dataset()
    ds.insert_record(1, CatalogRecord(url="u", title='A, "B"', publisher="x\ny"))
    data = ds.export_csv()
    assert b'"A, ""B"""' in data
    assert parse_csv(data)[0].title == 'A, "B"'


values = st.one_of(
    st.none(),
    st.text(alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\x00"), min_size=1, max_size=30),
)


@settings(max_examples=50)
@given(st.lists(st.fixed_dictionaries({k: values for k in CANONICAL_FIELDS}), max_size=8))
def test_csv_round_trip_property(rows):
    records = [
        CatalogRecord(url=f"http://x/{i}", **{**row, "title": row["title"] or "t"})
        for i, row in enumerate(rows)
    ]
    ds = Dataset()
    for i, r in enumerate(records):
        ds.insert_record(i, r)
    assert parse_csv(ds.export_csv()) == records


def test_persisted_count_matches_records():
    ds = Dataset()
    ds.insert_record(1, fig1_record())
    ds.append_log(entry(1, persisted=True))
    ds.append_log(entry(2, T0, status="not_found"))
    assert ds.persisted_count() == len(ds) == 1


def test_dataset_creates_parent_directories(tmp_path):
    with Dataset(tmp_path / "a" / "d.sqlite", tmp_path / "b" / "log.jsonl") as ds:
        assert len(ds) == 0
    assert (tmp_path / "a" / "d.sqlite").exists() and (tmp_path / "b" / "log.jsonl").exists()
