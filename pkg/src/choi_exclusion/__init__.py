"""Choi-rank bounds on conclusive state exclusion."""

__version__ = "0.1.0"
