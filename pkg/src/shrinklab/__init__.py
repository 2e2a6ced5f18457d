"""Shrinking targets, recurrence and mixing for non-autonomous circle maps."""

__version__ = "0.1.0"
