"""Morse-Conley-Floer homology of isolated invariant sets of smooth flows
on compact cubical blocks."""

__version__ = "0.1.0"
