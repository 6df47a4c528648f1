"""Single-cell Rydberg receiver DoA toolkit: spectra, reconstruction, bounds."""

__version__ = "0.1.0"
