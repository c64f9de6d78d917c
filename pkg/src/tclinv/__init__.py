"""Safe coordination of switched-subsystem collections via implicit invariant sets."""

__version__ = "0.1.0"
