"""Travel-intention-aware out-of-town POI recommendation."""
__version__ = "0.1.0"
