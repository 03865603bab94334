"""Harvest bibliographic records from label-table catalogue pages."""

from .crawl import CrawlConfig, RunSummary, build_url, fetch, format_record_number, run_crawl
from .extract import (
    DEFAULT_FIELD_SET,
    DEFAULT_LABEL_MAP,
    CatalogRecord,
    ExtractionResult,
    LabelMap,
    clean_text,
    completion_rate,
    extract_record,
    handle_null,
    is_persistable,
)
from .metrics import (
    AnomalyWindow,
    JumpStats,
    RunMetrics,
    compute_metrics,
    detect_anomalies,
    jump_stats,
    render_report,
)
from .promptgen import PromptSpec, expand_placeholders, render_prompt, validate_spec
from .store import Dataset, RunLogEntry

__version__ = "0.1.0"
