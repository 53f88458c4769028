"""Weighted summary-of-summaries context generation and categorization pipeline."""

__version__ = "0.1.0"
