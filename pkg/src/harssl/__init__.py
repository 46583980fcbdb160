"""Self-supervised human activity recognition from wrist accelerometry."""

__version__ = "0.1.0"
