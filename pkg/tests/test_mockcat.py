import time

import pytest
import requests

from bibharvest import mockcat
from bibharvest.crawl import CrawlConfig, run_crawl
from bibharvest.extract import CANONICAL_FIELDS, DEFAULT_LABEL_MAP, extract_record, is_persistable
from bibharvest.store import Dataset


def test_generation_is_deterministic():
    s = mockcat.CatalogueScenario(seed=11, id_start=1, id_end=50, not_found_rate=0.2,
                                  field_missing_prob={"publisher": 0.5})
    a_pages, a_manifest = mockcat.generate_pages(s)
    b_pages, b_manifest = mockcat.generate_pages(s)
    assert a_pages == b_pages
    assert a_manifest.to_json() == b_manifest.to_json()
    assert a_manifest.expected["not_found_count"] == 10


def test_complete_pages_extract_fully():
    s = mockcat.CatalogueScenario(seed=1, id_start=1, id_end=5)
    pages, manifest = mockcat.generate_pages(s)
    assert len(pages) == 5
    assert manifest.expected["mean_completion_rate"] == 1.0
    for rid, page in pages.items():
        rec = extract_record(page, "u", DEFAULT_LABEL_MAP).record
        assert all(getattr(rec, k) for k in CANONICAL_FIELDS)
        assert {k: getattr(rec, k) for k in CANONICAL_FIELDS} == {
            k: manifest.records[rid][k] for k in CANONICAL_FIELDS
        }


def test_title_missing_page_is_not_persistable():
    s = mockcat.CatalogueScenario(seed=2, id_start=1, id_end=5, title_missing_ids={3})
    pages, manifest = mockcat.generate_pages(s)
    assert not is_persistable(extract_record(pages[3], "u", DEFAULT_LABEL_MAP).record)
    assert not manifest.persistable(3)
    assert manifest.expected["skipped_title_count"] == 1
    assert manifest.persisted_ids() == [1, 2, 4, 5]


def test_gap_runs_give_planned_jumps():
    gaps = mockcat.plant_gap_runs(4, 1, 500, [1, 5, 20])
    assert len(gaps) == 26
    s = mockcat.CatalogueScenario(seed=4, id_start=1, id_end=500, gap_ids=gaps)
    _, manifest = mockcat.generate_pages(s)
    assert sorted(manifest.expected["jump_sizes"]) == [2, 6, 21]


def test_invalid_scenarios():
    with pytest.raises(mockcat.InvalidScenario):
        mockcat.CatalogueScenario(seed=0, id_start=5, id_end=1).validate()
    with pytest.raises(mockcat.InvalidScenario):
        mockcat.CatalogueScenario(seed=0, id_start=1, id_end=5, not_found_ids={9}).validate()
    with pytest.raises(mockcat.InvalidScenario):
        mockcat.CatalogueScenario(seed=0, id_start=1, id_end=5, field_missing_prob={"bogus": 0.1}).validate()
    with pytest.raises(mockcat.InvalidScenario):
        mockcat.CatalogueScenario.from_dict({"seed": 1})


def test_from_dict_uses_milliseconds():
    s = mockcat.CatalogueScenario.from_dict({
        "seed": 1, "id_start": 1, "id_end": 3,
        "latency_model": {"base": 100, "jitter": 20},
        "anomaly": {"after_n_requests": 2, "stall": 5000},
    })
    assert (s.latency_base, s.latency_jitter, s.anomaly.stall) == (0.1, 0.02, 5.0)


def test_serve_answers_200_and_404(mock_catalogue):
    s = mockcat.CatalogueScenario(seed=1, id_start=1, id_end=3, not_found_ids={2})
    server, _ = mock_catalogue(s)
    url = server.url_template
    assert requests.get(url.replace("{number}", "0000000001"), timeout=5).status_code == 200
    assert requests.get(url.replace("{number}", "0000000002"), timeout=5).status_code == 404
    assert requests.get(server.base_url + "/other", timeout=5).status_code == 404
    assert server.request_count == 3


def test_anomaly_stalls_next_request(mock_catalogue):
    s = mockcat.CatalogueScenario(seed=1, id_start=1, id_end=12, anomaly=mockcat.Anomaly(10, 1.0))
    server, _ = mock_catalogue(s)
    with requests.Session() as session:
        for n in range(1, 13):
            start = time.monotonic()
            session.get(server.url_template.replace("{number}", str(n).rjust(10, "0")), timeout=5)
            elapsed = time.monotonic() - start
            if n == 11:
                assert elapsed >= 1.0
            else:
                assert elapsed < 0.5


def test_materialize_feeds_file_crawl(tmp_path):
    s = mockcat.CatalogueScenario(seed=5, id_start=1, id_end=10, not_found_ids={4})
    pages, manifest = mockcat.generate_pages(s)
    template = mockcat.materialize(pages, manifest, tmp_path, s)
    assert (tmp_path / "manifest.json").exists()
    loaded = mockcat.Manifest.from_json((tmp_path / "manifest.json").read_text(encoding="utf-8"))
    assert loaded.persisted_ids() == manifest.persisted_ids()
    ds = Dataset()
    summary = run_crawl(CrawlConfig(template, 1, 10, pause=0), DEFAULT_LABEL_MAP, ds, ds)
    assert summary.not_found == 1 and summary.persisted == 9


def test_port_unavailable(mock_catalogue):
    s = mockcat.CatalogueScenario(seed=1, id_start=1, id_end=2)
    server, _ = mock_catalogue(s)
    with pytest.raises(mockcat.PortUnavailable):
        mockcat.serve({}, s, server.host, server.port)


def test_load_scenario(tmp_path):
    p = tmp_path / "s.yaml"
    p.write_text("scenario:\n  seed: 1\n  id_start: 1\n  id_end: 4\n", encoding="utf-8")
    assert mockcat.load_scenario(p).id_end == 4
