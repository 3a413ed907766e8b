"""Frequency-encoded addressing of NV spin arrays."""
__version__ = "0.1.0"
