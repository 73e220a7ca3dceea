"""Experiment harness: scenario configs, simulated worlds, and the CLI."""
