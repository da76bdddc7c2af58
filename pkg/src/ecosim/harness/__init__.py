"""Experiment harness: scenario files, canned suites, summaries and plot data."""
from .config import apply_cell, build_scenario, load_document
from .report import summarize, summarize_suite, write_plotdata, write_report_csv
from .suites import SUITES, ReportRow, SuiteResult, run_suite, suite_document

__all__ = [
    "SUITES", "ReportRow", "SuiteResult", "apply_cell", "build_scenario", "load_document",
    "run_suite", "suite_document", "summarize", "summarize_suite", "write_plotdata", "write_report_csv",
]
