"""Benchmark harness: configs, metrics, scenarios, figures, CLI."""
