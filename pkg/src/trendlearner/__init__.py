"""Early popularity-trend prediction for user generated content."""

__version__ = "0.1.0"
