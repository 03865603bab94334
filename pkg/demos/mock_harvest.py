"""
Harvesting a mock catalogue
===========================

Serve a seeded catalogue locally, crawl it with no pause and compare the
report with the ground truth written alongside the pages.
"""

from bibharvest import mockcat
from bibharvest.crawl import CrawlConfig, run_crawl
from bibharvest.extract import DEFAULT_LABEL_MAP
from bibharvest.metrics import compute_metrics, detect_anomalies, render_report
from bibharvest.store import Dataset

# 500 ids, a tenth of them missing, a few planted numbering gaps.
gaps = mockcat.plant_gap_runs(7, 1, 500, [1, 4, 12])
scenario = mockcat.CatalogueScenario(
    seed=7, id_start=1, id_end=500, not_found_rate=0.1, gap_ids=gaps,
    field_missing_prob={"author": 0.4, "dimensions": 0.1},
)
pages, manifest = mockcat.generate_pages(scenario)

with mockcat.serve(pages, scenario) as server, Dataset() as ds:
    config = CrawlConfig(server.url_template, 1, 500, pause=0)
    summary = run_crawl(config, DEFAULT_LABEL_MAP, ds, ds)
    log, records = ds.run_log(), ds.records()

print(summary.to_dict())

# A gap threshold of one minute; nothing here should come close.
metrics = compute_metrics(log, records, pause=0.0, anomalies=detect_anomalies(log, 60))
text, _ = render_report(metrics)
print(text)

print("manifest records:", manifest.expected["records_collected"])
print("manifest jumps:  ", manifest.expected["jump_count"])
