"""Synthetic scenarios, hindsight oracle, metrics and the experiment runner."""
