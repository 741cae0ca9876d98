"""Illuminating coordinates, multiplier identities and decay diagnostics for
the defocusing quintic wave equation outside non-star-shaped obstacles."""

__version__ = "0.1.0"
