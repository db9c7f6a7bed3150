"""Scenario configuration, verification pipeline, plot scripts and CLI."""
