"""Fairness-aware same-day-delivery dispatch: simulator, deep Q-learning, benchmarks."""

__version__ = "0.1.0"
