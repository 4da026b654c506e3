"""Wiretap-channel simulation, neural leakage estimation, and hash sizing."""

__version__ = "0.1.0"
