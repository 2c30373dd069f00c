"""maptext: synthetic annotated map-text scenes and polygon-matching
detection evaluation."""

__version__ = "0.1.0"
