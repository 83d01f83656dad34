"""Hybrid dialogue state tracking engine and evaluation harness."""

__version__ = "0.1.0"
