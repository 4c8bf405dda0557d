"""Streaming data cleaning with an error-injection experiment harness."""

__version__ = "0.1.0"
