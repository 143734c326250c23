"""Event-driven Earth-Observation processing pipeline."""

__version__ = "0.1.0"
