"""Hyperbolic and kagome-like lattices, their tight-binding spectra, and
capacitively coupled resonator circuits that emulate them."""

__version__ = "0.1.0"
