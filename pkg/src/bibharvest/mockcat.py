"""Synthetic label-table catalogue for hermetic crawl tests.

:func:`generate_pages` renders one HTML page per existing id from a seeded
generator and returns a :class:`Manifest` holding the ground truth: which ids
exist, exactly which field values each page carries, and the aggregate
counts a correct harvest must reproduce. :func:`serve` puts the pages behind
a local HTTP server with configurable latency and a one-off service stall;
:func:`materialize` writes them to disk for ``file://`` crawling.
"""

from __future__ import annotations

import html
import json
import logging
import math
import random
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Mapping, Optional, Union

import yaml

from .extract import CANONICAL_FIELDS, DEFAULT_LABEL_MAP, RECORD_FIELDS

logger = logging.getLogger(__name__)

DEFAULT_PREFIX = "/edicion/bimo"

# First (Spanish) alias of each field in the default label map.
PAGE_LABELS: dict[str, str] = {
    key: DEFAULT_LABEL_MAP.aliases_for(key)[0] for key in CANONICAL_FIELDS
}


class InvalidScenario(ValueError):
    pass


class PortUnavailable(OSError):
    pass


@dataclass
class Anomaly:
    after_n_requests: int
    stall: float


@dataclass
class CatalogueScenario:
    """A mock catalogue. Durations are in seconds.

    Either list ``not_found_ids`` explicitly or give ``not_found_rate``; with
    a rate, ``round(rate * number_of_ids)`` ids are drawn from those that are
    neither gaps nor title-missing.
    """

    seed: int
    id_start: int
    id_end: int
    not_found_ids: set[int] = field(default_factory=set)
    not_found_rate: Optional[float] = None
    gap_ids: set[int] = field(default_factory=set)
    field_missing_prob: dict[str, float] = field(default_factory=dict)
    title_missing_ids: set[int] = field(default_factory=set)
    latency_base: float = 0.0
    latency_jitter: float = 0.0
    anomaly: Optional[Anomaly] = None
    pad_width: int = 10
    path_prefix: str = DEFAULT_PREFIX

    def validate(self) -> None:
        if self.id_start < 0 or self.id_start > self.id_end:
            raise InvalidScenario("need 0 <= id_start <= id_end")
        if self.id_end >= 10**self.pad_width:
            raise InvalidScenario(f"id_end does not fit in {self.pad_width} digits")
        span = range(self.id_start, self.id_end + 1)
        for name in ("not_found_ids", "gap_ids", "title_missing_ids"):
            outside = [i for i in getattr(self, name) if i not in span]
            if outside:
                raise InvalidScenario(f"{name} outside the id range: {sorted(outside)[:5]}")
        if self.not_found_ids and self.not_found_rate is not None:
            raise InvalidScenario("give not_found_ids or not_found_rate, not both")
        if self.not_found_rate is not None and not 0.0 <= self.not_found_rate <= 1.0:
            raise InvalidScenario("not_found_rate must be in [0, 1]")
        for key, p in self.field_missing_prob.items():
            if key not in CANONICAL_FIELDS:
                raise InvalidScenario(f"field_missing_prob: unknown field {key!r}")
            if not 0.0 <= p <= 1.0:
                raise InvalidScenario(f"field_missing_prob[{key}] must be in [0, 1]")
        if self.latency_base < 0 or self.latency_jitter < 0:
            raise InvalidScenario("latency must be non-negative")
        if self.anomaly is not None and (
            self.anomaly.after_n_requests < 0 or self.anomaly.stall < 0
        ):
            raise InvalidScenario("anomaly values must be non-negative")
        if not self.path_prefix.startswith("/"):
            raise InvalidScenario("path_prefix must start with '/'")

    @classmethod
    def from_dict(cls, data: Mapping) -> "CatalogueScenario":
        """Build from a config mapping; durations there are integer milliseconds."""
        try:
            latency = data.get("latency_model") or {}
            anomaly = data.get("anomaly")
            scenario = cls(
                seed=int(data["seed"]),
                id_start=int(data["id_start"]),
                id_end=int(data["id_end"]),
                not_found_ids=set(data.get("not_found_ids") or ()),
                not_found_rate=data.get("not_found_rate"),
                gap_ids=set(data.get("gap_ids") or ()),
                field_missing_prob=dict(data.get("field_missing_prob") or {}),
                title_missing_ids=set(data.get("title_missing_ids") or ()),
                latency_base=latency.get("base", 0) / 1000.0,
                latency_jitter=latency.get("jitter", 0) / 1000.0,
                anomaly=None
                if anomaly is None
                else Anomaly(int(anomaly["after_n_requests"]), anomaly["stall"] / 1000.0),
                pad_width=int(data.get("pad_width", 10)),
                path_prefix=data.get("path_prefix", DEFAULT_PREFIX),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidScenario(f"malformed scenario: {exc}") from exc
        scenario.validate()
        return scenario

    def resolved_not_found_ids(self) -> set[int]:
        if self.not_found_rate is None:
            return set(self.not_found_ids)
        rng = random.Random(f"{self.seed}:not_found")
        pool = [
            i
            for i in range(self.id_start, self.id_end + 1)
            if i not in self.gap_ids and i not in self.title_missing_ids
        ]
        count = round(self.not_found_rate * (self.id_end - self.id_start + 1))
        if count > len(pool):
            raise InvalidScenario("not_found_rate leaves too few candidate ids")
        return set(rng.sample(pool, count))


def plant_gap_runs(
    seed: int, id_start: int, id_end: int, run_lengths: list[int], margin: int = 2
) -> set[int]:
    """Pick non-overlapping runs of consecutive ids to remove from the catalogue.

    A run of length ``n`` between two surviving ids produces a jump of
    ``n + 1``. Runs are kept ``margin`` ids apart and away from both ends.
    """
    rng = random.Random(f"{seed}:gaps")
    taken: set[int] = set()
    for length in run_lengths:
        for _ in range(1000):
            lo = rng.randint(id_start + margin, id_end - margin - length)
            block = range(lo - margin, lo + length + margin)
            if not taken.intersection(block):
                taken.update(range(lo, lo + length))
                break
        else:
            raise InvalidScenario("could not place all gap runs; widen the id range")
    return taken


# Value pools. Entries are already whitespace-normalized.
_TITLE_HEADS = [
    'El "profundo Isaac"',
    "La Regenta",
    "Episodios nacionales",
    "Historia de los heterodoxos españoles",
    "Cancionero de Baena",
    'Crónica de "La Gloriosa"',
    "Viaje a la Alcarria",
    "Árboles y jardines de Aranjuez",
    "Tratado de la pesca & la caza",
    "Memorias de un señor <anónimo>",
]
_TITLE_TAILS = [
    "documentos inéditos del archivo de Isaac Peral y Caballero",
    "novela",
    "recopilación de hechos y documentos",
    "edición crítica",
    "estudio preliminar, notas e índices",
    "tomo II",
    "poesía; prosa",
    "con un prólogo de Azorín",
]
_AUTHORS = [
    "Peral, Antonio",
    "Pérez Galdós, Benito (1843-1920)",
    "Pardo Bazán, Emilia",
    "Clarín",
    "Menéndez Pelayo, Marcelino",
    "Cela, Camilo José",
    "Ibáñez, José; Núñez, María",
]
_PLACES = ["Madrid", "Barcelona", "Sevilla", "A Coruña", "San Sebastián", "Valencia", "[S.l.]"]
_PUBLISHERS = [
    "Castro",
    "Espasa-Calpe",
    "Imp. de Fortanet",
    "Librería de Fernando Fé",
    "Sucesores de Rivadeneyra",
    'Tip. "La Académica"',
    "Aguilar, S.A.",
]
_OTHER_PHYSICAL = ["lám.", "il.", "il., map.", "grab.; retr.", "il. col."]
_MATERIAL = ["Texto impreso", "Monografía", "Partitura"]
_LOCATIONS = ["Salón General", "Sala Cervantes", "Depósito", "Sala Goya"]
_HEADQUARTERS = ["Sede de Recoletos", "Sede de Alcalá"]


def _field_value(key: str, rng: random.Random) -> str:
    if key == "title":
        parts = [rng.choice(_TITLE_HEADS)] + rng.sample(_TITLE_TAILS, rng.randint(0, 2))
        title = " ;".join(parts)
        return title + " ;" if rng.random() < 0.5 else title
    if key == "author":
        return rng.choice(_AUTHORS)
    if key == "placeOfPublication":
        return rng.choice(_PLACES)
    if key == "publisher":
        return rng.choice(_PUBLISHERS)
    if key == "publicationDate":
        year = rng.randint(1800, 1990)
        return f"[ca. {year}]" if rng.random() < 0.1 else str(year)
    if key == "physicalDescription":
        pages = rng.randint(8, 900)
        return f"XII, {pages} p." if rng.random() < 0.2 else f"{pages} p."
    if key == "otherPhysicalCharacteristics":
        return rng.choice(_OTHER_PHYSICAL)
    if key == "dimensions":
        return f"{rng.randint(12, 35)} cm"
    if key == "materialType":
        return rng.choice(_MATERIAL)
    if key == "signature":
        return f"{rng.randint(1, 12)}/{rng.randint(1000, 99999)}"
    if key == "location":
        return rng.choice(_LOCATIONS)
    if key == "headquarters":
        return rng.choice(_HEADQUARTERS)
    raise KeyError(key)


def _spread_whitespace(value: str, rng: random.Random) -> str:
    """Re-insert messy whitespace the extractor must normalize away."""
    if rng.random() < 0.3 and " " in value:
        head, _, tail = value.partition(" ")
        value = f"{head}\n\t   {tail}"
    if rng.random() < 0.3:
        value = f"\n    {value}  "
    return value


def _render_page(record_id: int, number: str, fields: dict[str, str], rng: random.Random) -> str:
    rows = []
    for key in CANONICAL_FIELDS:
        if key not in fields:
            continue
        value = html.escape(_spread_whitespace(fields[key], rng), quote=rng.random() < 0.5)
        rows.append(
            f'<tr><td class="label-row"><strong>{PAGE_LABELS[key]}</strong></td>'
            f"<td>{value}</td></tr>"
        )
        if key == "title" and rng.random() < 0.2:
            rows.append(
                '<tr><td class="label-row"><strong>Enlace permanente</strong></td>'
                f"<td>https://example.invalid/bimo{number}</td></tr>"
            )
    body = "\n".join(rows)
    return f"""<!DOCTYPE html>
<html lang="es">
<head><meta charset="utf-8"><title>Registro {number}</title></head>
<body>
<table class="nav"><tr><td>Inicio</td><td>Buscar</td></tr></table>
<div id="record-{record_id}">
<table class="ficha">
{body}
</table>
</div>
<table class="footer"><tr><td><strong>Título</strong></td><td>Pie de página</td></tr></table>
</body>
</html>
"""


@dataclass
class Manifest:
    """Ground truth for a generated catalogue."""

    status: dict[int, str]  # exists | not_found | gap
    records: dict[int, dict]  # id -> CatalogRecord fields, for existing ids
    expected: dict

    def persisted_ids(self) -> list[int]:
        return sorted(i for i, rec in self.records.items() if rec.get("title"))

    def persistable(self, record_id: int) -> bool:
        rec = self.records.get(record_id)
        return bool(rec and rec.get("title"))

    def to_json(self) -> str:
        return json.dumps(
            {
                "status": {str(k): v for k, v in sorted(self.status.items())},
                "records": {str(k): v for k, v in sorted(self.records.items())},
                "expected": self.expected,
            },
            ensure_ascii=False,
            indent=1,
            sort_keys=False,
        )

    @classmethod
    def from_json(cls, text: str) -> "Manifest":
        data = json.loads(text)
        return cls(
            status={int(k): v for k, v in data["status"].items()},
            records={int(k): v for k, v in data["records"].items()},
            expected=data["expected"],
        )


def _expected_aggregates(scenario: CatalogueScenario, status, records) -> dict:
    ids = range(scenario.id_start, scenario.id_end + 1)
    persisted = [i for i in ids if status[i] == "exists" and records[i].get("title")]
    skipped = sum(1 for i in ids if status[i] == "exists" and not records[i].get("title"))
    # Walk the id line and measure the distance back to the previous stored id.
    sizes = []
    previous = None
    for i in ids:
        if i in records and records[i].get("title"):
            if previous is not None and i - previous >= 2:
                sizes.append(i - previous)
            previous = i
    rates = [
        sum(1 for key in CANONICAL_FIELDS if records[i].get(key)) / len(CANONICAL_FIELDS)
        for i in persisted
    ]
    return {
        "total_links": len(ids),
        "not_found_count": sum(1 for i in ids if status[i] != "exists"),
        "records_collected": len(persisted),
        "skipped_title_count": skipped,
        "jump_count": len(sizes),
        "jump_sizes": sizes,
        "min_jump": min(sizes) if sizes else None,
        "max_jump": max(sizes) if sizes else None,
        "mean_completion_rate": math.fsum(rates) / len(rates) if rates else None,
        "completion_rates": {str(i): r for i, r in zip(persisted, rates)},
    }


def generate_pages(scenario: CatalogueScenario) -> tuple[dict[int, str], Manifest]:
    """Render every existing page and the matching manifest. Deterministic in the seed."""
    scenario.validate()
    not_found = scenario.resolved_not_found_ids()
    rng = random.Random(scenario.seed)
    pages: dict[int, str] = {}
    status: dict[int, str] = {}
    records: dict[int, dict] = {}
    for record_id in range(scenario.id_start, scenario.id_end + 1):
        if record_id in scenario.gap_ids:
            status[record_id] = "gap"
            continue
        if record_id in not_found:
            status[record_id] = "not_found"
            continue
        status[record_id] = "exists"
        number = str(record_id).rjust(scenario.pad_width, "0")
        fields = {}
        for key in CANONICAL_FIELDS:
            value = _field_value(key, rng)
            missing = rng.random() < scenario.field_missing_prob.get(key, 0.0)
            if key == "title" and record_id in scenario.title_missing_ids:
                missing = True
            if not missing:
                fields[key] = value
        url = f"{scenario.path_prefix}{number}.html"
        records[record_id] = {"url": url, **{k: fields.get(k) for k in RECORD_FIELDS[1:]}}
        pages[record_id] = _render_page(record_id, number, fields, rng)
    manifest = Manifest(status, records, _expected_aggregates(scenario, status, records))
    return pages, manifest


def materialize(
    pages: Mapping[int, str],
    manifest: Manifest,
    directory: Union[str, Path],
    scenario: CatalogueScenario,
) -> str:
    """Write pages and ``manifest.json`` under ``directory``.

    Returns a ``file://`` url template for the crawler.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = scenario.path_prefix.rsplit("/", 1)[-1]
    for record_id, page in pages.items():
        number = str(record_id).rjust(scenario.pad_width, "0")
        (directory / f"{stem}{number}.html").write_text(page, encoding="utf-8")
    (directory / "manifest.json").write_text(manifest.to_json() + "\n", encoding="utf-8")
    return f"{directory.resolve().as_uri()}/{stem}{{number}}.html"


class _CatalogueHTTPServer(ThreadingHTTPServer):
    daemon_threads = True
    block_on_close = False


class MockCatalogue:
    """A running mock catalogue. Use as a context manager or call :meth:`shutdown`."""

    def __init__(self, pages, scenario: CatalogueScenario, host="127.0.0.1", port=0):
        self.pages = dict(pages)
        self.scenario = scenario
        self.request_count = 0
        self.latencies: list[float] = []
        self._lock = threading.Lock()
        self._rng = random.Random(f"{scenario.seed}:latency")
        self._stall_until: Optional[float] = None
        handler = self._make_handler()
        try:
            self._server = _CatalogueHTTPServer((host, port), handler)
        except OSError as exc:
            raise PortUnavailable(f"cannot bind {host}:{port}: {exc}") from exc
        self.host, self.port = self._server.server_address[:2]
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    @property
    def base_url(self) -> str:
        return f"http://{self.host}:{self.port}"

    @property
    def url_template(self) -> str:
        return f"{self.base_url}{self.scenario.path_prefix}{{number}}.html"

    def shutdown(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout=5)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()

    def _delay(self) -> None:
        # Called with the lock held, so requests are answered one at a time.
        scenario = self.scenario
        self.request_count += 1
        now = time.monotonic()
        anomaly = scenario.anomaly
        if anomaly is not None and self.request_count == anomaly.after_n_requests + 1:
            self._stall_until = now + anomaly.stall
        if self._stall_until is not None and now < self._stall_until:
            time.sleep(self._stall_until - now)
        delay = scenario.latency_base + self._rng.uniform(0.0, scenario.latency_jitter)
        if delay > 0:
            time.sleep(delay)

    def _lookup(self, path: str) -> Optional[str]:
        prefix = self.scenario.path_prefix
        if not (path.startswith(prefix) and path.endswith(".html")):
            return None
        digits = path[len(prefix) : -len(".html")]
        if not digits.isdigit():
            return None
        return self.pages.get(int(digits))

    def _make_handler(self):
        catalogue = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"
            disable_nagle_algorithm = True

            def do_GET(self):
                start = time.monotonic()
                with catalogue._lock:
                    catalogue._delay()
                    page = catalogue._lookup(self.path.split("?", 1)[0])
                    catalogue.latencies.append(time.monotonic() - start)
                if page is None:
                    body = b"<html><body><h1>404 Not Found</h1></body></html>"
                    self.send_response(404)
                else:
                    body = page.encode("utf-8")
                    self.send_response(200)
                self.send_header("Content-Type", "text/html; charset=utf-8")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, format, *args):
                logger.debug("mockcat: " + format, *args)

        return Handler


def serve(
    pages: Mapping[int, str],
    scenario: CatalogueScenario,
    host: str = "127.0.0.1",
    port: int = 0,
) -> MockCatalogue:
    """Start serving ``pages`` in a background thread. ``port=0`` picks a free port."""
    return MockCatalogue(pages, scenario, host, port)


def load_scenario(path: Union[str, Path]) -> CatalogueScenario:
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, Mapping):
        raise InvalidScenario(f"{path}: expected a mapping")
    return CatalogueScenario.from_dict(data.get("scenario", data))
