"""Turbo equalization with decision-feedback expectation propagation."""

__version__ = "0.1.0"
