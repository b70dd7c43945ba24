"""Robot-assisted hemispherical antenna-pattern measurement, simulated end to end."""

__version__ = "0.1.0"
