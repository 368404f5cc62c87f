"""Experiment configs, Monte-Carlo runner, file formats and CLI."""
