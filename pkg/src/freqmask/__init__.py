"""Sparse Fourier-domain modulatory masks for frozen image classifiers."""

__version__ = "0.1.0"
