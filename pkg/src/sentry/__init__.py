"""MiniSol contract sentry: static analysis plus multi-objective input search."""

__version__ = "0.1.0"
