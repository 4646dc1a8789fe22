"""clinibench: benchmark engine for discharge-diagnosis prediction from
admission notes."""

__version__ = "0.1.0"
