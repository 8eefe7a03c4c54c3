"""Puck localization and multi-task event recognition on hockey video clips."""

__version__ = "0.1.0"
