"""Heterodyne spectra of light scattered by a thermally driven micro-mirror."""

__version__ = "0.1.0"
