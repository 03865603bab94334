"""Sequential ID-enumeration crawler with a politeness pause.

The loop walks ``start_id..end_id``, builds one URL per id, fetches it,
extracts a record from successful pages and hands titled records to the
record sink. Every attempt goes to the run-log sink, so an interrupted run
can pick up at the id after the last logged one.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional, Protocol
from urllib.parse import unquote, urlparse

import requests

from .extract import (
    DEFAULT_FIELD_SET,
    DEFAULT_LABEL_MAP,
    CatalogRecord,
    LabelMap,
    UnparseableInput,
    completion_rate,
    extract_record,
    is_persistable,
)
from .store import RunLogEntry

logger = logging.getLogger(__name__)

PLACEHOLDER = "{number}"
MAX_REDIRECTS = 10
DEFAULT_USER_AGENT = "bibharvest/0.1 (polite catalogue harvester)"

PAUSE_SCOPES = ("after_insert", "every_request")
STOP_REASONS = ("end_id_reached", "target_count_reached", "error_threshold", "operator_abort")


class CrawlError(Exception):
    pass


class ConfigInvalid(CrawlError):
    """A crawl setting is out of range. ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class BadTemplate(CrawlError):
    pass


class Overflow(CrawlError):
    pass


class SinkFailure(CrawlError):
    """A sink raised while the crawl was writing to it."""

    def __init__(self, message: str, summary: "RunSummary"):
        super().__init__(message)
        self.summary = summary


@dataclass
class CrawlConfig:
    """Crawl settings. Durations are in seconds."""

    url_template: str
    start_id: int
    end_id: int
    pad_width: int = 10
    pause: float = 3.0
    pause_scope: str = "after_insert"
    target_count: Optional[int] = None
    request_timeout: float = 30.0
    max_consecutive_errors: int = 100
    follow_redirects: bool = True
    user_agent: str = DEFAULT_USER_AGENT

    def validate(self, prefix: str = "crawl") -> None:
        """Raise :class:`ConfigInvalid` on the first violated constraint."""

        def bad(name, message):
            raise ConfigInvalid(f"{prefix}.{name}", message)

        if not isinstance(self.url_template, str) or self.url_template.count(PLACEHOLDER) != 1:
            bad("url_template", f"must contain exactly one {PLACEHOLDER} placeholder")
        for name in ("start_id", "end_id", "pad_width", "max_consecutive_errors"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                bad(name, "must be an integer")
        if self.start_id < 0:
            bad("start_id", "must be non-negative")
        if self.end_id < 0:
            bad("end_id", "must be non-negative")
        if self.start_id > self.end_id:
            bad("start_id", f"start_id {self.start_id} exceeds end_id {self.end_id}")
        if self.pad_width <= 0:
            bad("pad_width", "must be positive")
        if self.end_id >= 10**self.pad_width:
            bad("end_id", f"does not fit in {self.pad_width} digits")
        if self.pause < 0:
            bad("pause", "must be non-negative")
        if self.pause_scope not in PAUSE_SCOPES:
            bad("pause_scope", f"must be one of {', '.join(PAUSE_SCOPES)}")
        if self.target_count is not None and (
            not isinstance(self.target_count, int) or self.target_count <= 0
        ):
            bad("target_count", "must be a positive integer")
        if self.request_timeout <= 0:
            bad("request_timeout", "must be positive")
        if self.max_consecutive_errors <= 0:
            bad("max_consecutive_errors", "must be positive")


@dataclass
class FetchOutcome:
    id: int
    url: str
    status: str  # ok | not_found | error
    http_status: Optional[int]
    latency: float
    fetched_at: datetime
    body: Optional[str] = None
    detail: Optional[str] = None


@dataclass
class RunSummary:
    attempted: int = 0
    persisted: int = 0
    not_found: int = 0
    errors: int = 0
    skipped_null_title: int = 0
    started_at: Optional[datetime] = None
    ended_at: Optional[datetime] = None
    stop_reason: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "attempted": self.attempted,
            "persisted": self.persisted,
            "not_found": self.not_found,
            "errors": self.errors,
            "skipped_null_title": self.skipped_null_title,
            "started_at": self.started_at.isoformat() if self.started_at else None,
            "ended_at": self.ended_at.isoformat() if self.ended_at else None,
            "stop_reason": self.stop_reason,
        }


class RecordSink(Protocol):
    def insert_record(self, id: int, record: CatalogRecord) -> None: ...


class RunLogSink(Protocol):
    def append_log(self, entry: RunLogEntry) -> None: ...

    def last_log_entry(self) -> Optional[RunLogEntry]: ...

    def persisted_count(self) -> int: ...


def format_record_number(n: int, width: int) -> str:
    """Zero-pad ``n`` to exactly ``width`` digits."""
    if n < 0:
        raise ValueError("record number must be non-negative")
    if width <= 0:
        raise ValueError("width must be positive")
    text = str(n)
    if len(text) > width:
        raise Overflow(f"{n} has more than {width} digits")
    return text.rjust(width, "0")


def build_url(template: str, number: str) -> str:
    count = template.count(PLACEHOLDER)
    if count != 1:
        raise BadTemplate(f"template must contain exactly one {PLACEHOLDER}, found {count}")
    return template.replace(PLACEHOLDER, number)


def utc_now() -> datetime:
    now = datetime.now(timezone.utc)
    return now.replace(microsecond=now.microsecond // 1000 * 1000)


def make_session(config: CrawlConfig) -> requests.Session:
    session = requests.Session()
    session.headers["User-Agent"] = config.user_agent
    session.max_redirects = MAX_REDIRECTS
    return session


def _fetch_file(url: str, record_id: int, start: float) -> FetchOutcome:
    path = Path(unquote(urlparse(url).path))
    try:
        body = path.read_bytes().decode("utf-8", errors="replace")
    except FileNotFoundError:
        return FetchOutcome(record_id, url, "not_found", 404, time.monotonic() - start, utc_now())
    except OSError as exc:
        return FetchOutcome(
            record_id, url, "error", None, time.monotonic() - start, utc_now(), detail=str(exc)
        )
    return FetchOutcome(record_id, url, "ok", 200, time.monotonic() - start, utc_now(), body)


def _decode(response: requests.Response) -> str:
    content_type = response.headers.get("Content-Type", "")
    encoding = response.encoding if "charset" in content_type.lower() else "utf-8"
    return response.content.decode(encoding or "utf-8", errors="replace")


def fetch(
    url: str,
    config: CrawlConfig,
    session: Optional[requests.Session] = None,
    record_id: int = -1,
) -> FetchOutcome:
    """GET ``url`` once and classify the outcome.

    2xx is ``ok``, 404 is ``not_found``, anything else (other statuses,
    timeouts, refused connections, redirect loops) is ``error``. Never raises
    for network failures. ``file://`` URLs read from disk, with a missing file
    reported as a 404.
    """
    start = time.monotonic()
    if url.startswith("file://"):
        return _fetch_file(url, record_id, start)
    own_session = session is None
    if own_session:
        session = make_session(config)
    try:
        response = session.get(
            url,
            timeout=config.request_timeout,
            allow_redirects=config.follow_redirects,
            headers={"User-Agent": config.user_agent},
        )
    except requests.RequestException as exc:
        return FetchOutcome(
            record_id, url, "error", None, time.monotonic() - start, utc_now(),
            detail=f"{type(exc).__name__}: {exc}",
        )
    finally:
        if own_session:
            session.close()
    latency = time.monotonic() - start
    code = response.status_code
    if 200 <= code < 300:
        return FetchOutcome(record_id, url, "ok", code, latency, utc_now(), _decode(response))
    if code == 404:
        return FetchOutcome(record_id, url, "not_found", 404, latency, utc_now())
    return FetchOutcome(record_id, url, "error", code, latency, utc_now(), detail=response.reason)


@dataclass
class _Pauser:
    stop_event: threading.Event
    sleep: Optional[Callable[[float], None]] = None

    def __call__(self, seconds: float) -> None:
        if seconds <= 0:
            return
        if self.sleep is not None:
            self.sleep(seconds)
        else:
            self.stop_event.wait(seconds)


def run_crawl(
    config: CrawlConfig,
    label_map: LabelMap,
    records: RecordSink,
    run_log: RunLogSink,
    *,
    resume: bool = False,
    stop_event: Optional[threading.Event] = None,
    session: Optional[requests.Session] = None,
    on_outcome: Optional[Callable[[FetchOutcome], None]] = None,
    sleep: Optional[Callable[[float], None]] = None,
) -> RunSummary:
    """Enumerate ids, fetch, extract and persist.

    Stops at the end of the id range, when ``target_count`` titled records
    are stored (counting those from earlier runs when resuming), after
    ``max_consecutive_errors`` back-to-back errors (404s break the streak
    rather than extend it), or when ``stop_event`` is set. The stop event is
    checked between records, so the record in flight always completes.

    With ``resume=True`` the crawl starts at the id after the last entry in
    ``run_log``.

    Raises:
        ConfigInvalid: ``config`` fails validation.
        SinkFailure: a sink raised; the partial summary is attached.
    """
    config.validate()
    stop_event = stop_event or threading.Event()
    pause = _Pauser(stop_event, sleep)
    summary = RunSummary(started_at=utc_now())

    start_id = config.start_id
    already_persisted = 0
    last_ts = None
    if resume:
        last = run_log.last_log_entry()
        if last is not None:
            start_id = last.id + 1
            last_ts = last.ts
            already_persisted = run_log.persisted_count()
            logger.info("resuming after id %d", last.id)

    own_session = session is None
    if own_session:
        session = make_session(config)

    consecutive_errors = 0
    try:
        if config.target_count is not None and already_persisted >= config.target_count:
            summary.stop_reason = "target_count_reached"
            return summary
        for record_id in range(start_id, config.end_id + 1):
            if stop_event.is_set():
                summary.stop_reason = "operator_abort"
                break
            url = build_url(config.url_template, format_record_number(record_id, config.pad_width))
            outcome = fetch(url, config, session, record_id)
            summary.attempted += 1

            persisted = False
            fields_present = 0
            if outcome.status == "ok":
                consecutive_errors = 0
                try:
                    record = extract_record(outcome.body, url, label_map).record
                except UnparseableInput as exc:
                    logger.warning("id %d: unparseable page (%s)", record_id, exc)
                    record = CatalogRecord(url=url)
                fields_present = round(completion_rate(record) * len(DEFAULT_FIELD_SET))
                if is_persistable(record):
                    try:
                        records.insert_record(record_id, record)
                    except Exception as exc:
                        summary.stop_reason = "operator_abort"
                        raise SinkFailure(f"record sink failed at id {record_id}: {exc}", summary) from exc
                    persisted = True
                    summary.persisted += 1
                else:
                    summary.skipped_null_title += 1
            elif outcome.status == "not_found":
                consecutive_errors = 0
                summary.not_found += 1
            else:
                consecutive_errors += 1
                summary.errors += 1
                logger.warning("id %d: %s (%s)", record_id, outcome.http_status, outcome.detail)

            ts = outcome.fetched_at if last_ts is None else max(outcome.fetched_at, last_ts)
            last_ts = ts
            entry = RunLogEntry(
                ts=ts,
                id=record_id,
                url=url,
                status=outcome.status,
                http_status=outcome.http_status,
                latency_ms=max(0, round(outcome.latency * 1000)),
                persisted=persisted,
                fields_present=fields_present,
            )
            try:
                run_log.append_log(entry)
            except Exception as exc:
                summary.stop_reason = "operator_abort"
                raise SinkFailure(f"run-log sink failed at id {record_id}: {exc}", summary) from exc
            if on_outcome is not None:
                on_outcome(outcome)

            if config.target_count is not None and (
                already_persisted + summary.persisted >= config.target_count
            ):
                summary.stop_reason = "target_count_reached"
                break
            if consecutive_errors >= config.max_consecutive_errors:
                summary.stop_reason = "error_threshold"
                break
            if record_id < config.end_id and (
                config.pause_scope == "every_request" or persisted
            ):
                pause(config.pause)
        else:
            summary.stop_reason = "end_id_reached"
    finally:
        summary.ended_at = utc_now()
        if own_session:
            session.close()
    return summary
