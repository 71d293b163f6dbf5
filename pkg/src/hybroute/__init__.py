"""Compact constant-stretch routing for unit-disk graphs in a hybrid network model."""

__version__ = "0.1.0"
