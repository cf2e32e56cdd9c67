"""FLOPs-constrained search for the mask with the largest accuracy drop."""

from obfunas.search.core import (
    MAX_RETRIES,
    Candidate,
    Evaluator,
    SearchConfig,
    mutate,
    random_application,
    structural_key,
)
from obfunas.search.evolution import brute_force_search, evolve, reachable_masks
from obfunas.search.report import HISTORY_HEADER, REPORT_SCHEMA, HistoryRow, SearchReport, load_report

__all__ = [
    "HISTORY_HEADER", "MAX_RETRIES", "REPORT_SCHEMA", "Candidate", "Evaluator", "HistoryRow", "SearchConfig",
    "SearchReport", "brute_force_search", "evolve", "load_report", "mutate", "random_application",
    "reachable_masks", "structural_key",
]
