"""Device-independent key distribution toolkit: CHSH analysis, Jordan
reductions, entropy and finite-size bounds, and a protocol simulator."""

__version__ = "0.1.0"
