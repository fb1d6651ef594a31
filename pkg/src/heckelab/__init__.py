"""Twisted central L-values of GL(2) newforms over Q and their Galois averages."""
__version__ = "0.1.0"
