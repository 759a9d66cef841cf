"""Deterministic ray-traced ISAC channel simulator."""

__version__ = "0.1.0"
