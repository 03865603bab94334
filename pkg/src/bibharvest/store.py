"""Record storage and the append-only run log.

Records go to a single-file SQLite database whose ``datosBNE`` table keeps
the 13 text columns of the harvested schema plus the record id. The run log
is a JSON-lines file, one attempt per line, appended and flushed as the crawl
progresses.
"""

from __future__ import annotations

import csv
import io
import json
import os
import sqlite3
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional, Union

from .extract import DEFAULT_FIELD_SET, RECORD_FIELDS, CatalogRecord, is_persistable

TABLE = "datosBNE"
LOG_KEYS = (
    "ts",
    "id",
    "url",
    "status",
    "http_status",
    "latency_ms",
    "persisted",
    "fields_present",
)
STATUSES = ("ok", "not_found", "error")


class StoreError(Exception):
    pass


class DuplicateId(StoreError):
    pass


class NotPersistable(StoreError):
    """A record without a title was offered for storage."""


class NonMonotoneTimestamp(StoreError):
    pass


class StorageFailure(StoreError):
    pass


class RunLogParseError(StoreError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def format_ts(ts: datetime) -> str:
    """ISO-8601 UTC with millisecond precision and a ``Z`` suffix."""
    ts = ts.astimezone(timezone.utc)
    return ts.strftime("%Y-%m-%dT%H:%M:%S.") + f"{ts.microsecond // 1000:03d}Z"


def parse_ts(text: str) -> datetime:
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        raise ValueError(f"timestamp {text!r} has no timezone")
    return ts.astimezone(timezone.utc)


@dataclass
class RunLogEntry:
    ts: datetime
    id: int
    url: str
    status: str
    http_status: Optional[int]
    latency_ms: int
    persisted: bool
    fields_present: int

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if self.persisted and self.status != "ok":
            raise ValueError("only ok attempts can be persisted")
        if self.latency_ms < 0:
            raise ValueError("latency_ms must be non-negative")
        if not 0 <= self.fields_present <= len(DEFAULT_FIELD_SET):
            raise ValueError(f"fields_present out of range: {self.fields_present}")

    def to_json(self) -> str:
        obj = {
            "ts": format_ts(self.ts),
            "id": self.id,
            "url": self.url,
            "status": self.status,
            "http_status": self.http_status,
            "latency_ms": self.latency_ms,
            "persisted": self.persisted,
            "fields_present": self.fields_present,
        }
        return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "RunLogEntry":
        obj = json.loads(line)
        if not isinstance(obj, dict):
            raise ValueError("expected an object")
        missing = [k for k in LOG_KEYS if k not in obj]
        if missing:
            raise ValueError(f"missing keys: {', '.join(missing)}")
        extra = sorted(set(obj) - set(LOG_KEYS))
        if extra:
            raise ValueError(f"unexpected keys: {', '.join(extra)}")
        return cls(
            ts=parse_ts(obj["ts"]),
            id=int(obj["id"]),
            url=obj["url"],
            status=obj["status"],
            http_status=None if obj["http_status"] is None else int(obj["http_status"]),
            latency_ms=int(obj["latency_ms"]),
            persisted=bool(obj["persisted"]),
            fields_present=int(obj["fields_present"]),
        )


def parse_run_log(data: Union[bytes, str, Iterable[str]]) -> list[RunLogEntry]:
    """Parse JSON-lines run-log content. Blank lines are ignored.

    Raises:
        RunLogParseError: with the 1-based line number of the bad line.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    lines = data.splitlines() if isinstance(data, str) else data
    entries = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            entries.append(RunLogEntry.from_json(line))
        except (ValueError, TypeError, KeyError) as exc:
            raise RunLogParseError(line_no, str(exc)) from exc
    return entries


def read_run_log(path: Union[str, Path]) -> list[RunLogEntry]:
    with open(path, encoding="utf-8") as fh:
        return parse_run_log(fh)


def records_to_csv(records: Iterable[CatalogRecord]) -> bytes:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(RECORD_FIELDS)
    for record in records:
        row = record.to_dict()
        writer.writerow(["" if row[name] is None else row[name] for name in RECORD_FIELDS])
    return buf.getvalue().encode("utf-8")


def parse_csv(data: Union[bytes, str]) -> list[CatalogRecord]:
    """Read back a CSV export. Empty cells become ``None``."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    reader = csv.reader(io.StringIO(data, newline=""))
    header = next(reader, None)
    if header is None:
        return []
    if tuple(header) != RECORD_FIELDS:
        raise StoreError(f"unexpected CSV header: {header}")
    return [
        CatalogRecord.from_dict({k: (v if v != "" else None) for k, v in zip(header, row)})
        for row in reader
    ]


class Dataset:
    """Harvested records plus their run log.

    Pass ``None`` for either path to keep that part in memory. Opening
    existing files picks up where they left off, which is what resume relies
    on.
    """

    def __init__(
        self,
        db_path: Union[str, Path, None] = None,
        log_path: Union[str, Path, None] = None,
    ):
        self.db_path = Path(db_path) if db_path is not None else None
        self.log_path = Path(log_path) if log_path is not None else None
        for path in (self.db_path, self.log_path):
            if path is not None:
                try:
                    path.parent.mkdir(parents=True, exist_ok=True)
                except OSError as exc:
                    raise StorageFailure(f"cannot create {path.parent}: {exc}") from exc
        try:
            self._conn = sqlite3.connect(str(self.db_path) if self.db_path else ":memory:")
            columns = ", ".join(f'"{name}" TEXT' for name in RECORD_FIELDS)
            self._conn.execute(
                f'CREATE TABLE IF NOT EXISTS "{TABLE}" (id INTEGER PRIMARY KEY, {columns})'
            )
            self._conn.commit()
        except sqlite3.Error as exc:
            raise StorageFailure(f"cannot open {self.db_path}: {exc}") from exc

        self._log: list[RunLogEntry] = []
        self._log_fh = None
        if self.log_path is not None:
            if self.log_path.exists():
                self._log = read_run_log(self.log_path)
            try:
                self._log_fh = open(self.log_path, "a", encoding="utf-8", newline="\n")
            except OSError as exc:
                raise StorageFailure(f"cannot open {self.log_path}: {exc}") from exc

    def close(self) -> None:
        if self._log_fh is not None:
            self._log_fh.close()
            self._log_fh = None
        self._conn.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # records

    def insert_record(self, id: int, record: CatalogRecord) -> None:
        if not is_persistable(record):
            raise NotPersistable(f"record {id} has no title")
        values = record.to_dict()
        placeholders = ", ".join("?" for _ in range(len(RECORD_FIELDS) + 1))
        names = ", ".join(f'"{n}"' for n in RECORD_FIELDS)
        try:
            with self._conn:
                self._conn.execute(
                    f'INSERT INTO "{TABLE}" (id, {names}) VALUES ({placeholders})',
                    [id, *(values[n] for n in RECORD_FIELDS)],
                )
        except sqlite3.IntegrityError as exc:
            raise DuplicateId(f"record {id} already stored") from exc
        except sqlite3.Error as exc:
            raise StorageFailure(str(exc)) from exc

    def records(self) -> dict[int, CatalogRecord]:
        """All stored records keyed by id, in ascending id order."""
        names = ", ".join(f'"{n}"' for n in RECORD_FIELDS)
        rows = self._conn.execute(f'SELECT id, {names} FROM "{TABLE}" ORDER BY id')
        return {
            row[0]: CatalogRecord(**dict(zip(RECORD_FIELDS, row[1:]))) for row in rows
        }

    def __len__(self) -> int:
        return self._conn.execute(f'SELECT COUNT(*) FROM "{TABLE}"').fetchone()[0]

    # run log

    def append_log(self, entry: RunLogEntry) -> None:
        if self._log and entry.ts < self._log[-1].ts:
            raise NonMonotoneTimestamp(
                f"entry for id {entry.id} at {format_ts(entry.ts)} precedes "
                f"{format_ts(self._log[-1].ts)}"
            )
        if self._log_fh is not None:
            try:
                self._log_fh.write(entry.to_json() + "\n")
                self._log_fh.flush()
            except OSError as exc:
                raise StorageFailure(str(exc)) from exc
        self._log.append(entry)

    def run_log(self) -> list[RunLogEntry]:
        return list(self._log)

    def last_log_entry(self) -> Optional[RunLogEntry]:
        return self._log[-1] if self._log else None

    def persisted_count(self) -> int:
        return sum(1 for e in self._log if e.persisted)

    def sync(self) -> None:
        if self._log_fh is not None:
            self._log_fh.flush()
            os.fsync(self._log_fh.fileno())

    # exports

    def export_csv(self) -> bytes:
        """RFC 4180 CSV of every record in id order, header row first."""
        return records_to_csv(self.records().values())

    def export_run_log(self) -> bytes:
        return "".join(e.to_json() + "\n" for e in self._log).encode("utf-8")


def open_dataset(db_path: Union[str, Path]) -> Dataset:
    """Open an existing record database without touching any run log."""
    if not Path(db_path).exists():
        raise StorageFailure(f"dataset {db_path} does not exist")
    return Dataset(db_path)
