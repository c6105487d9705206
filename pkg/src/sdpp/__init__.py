"""Lane-level enhancement of OpenStreetMap road maps from road-manual knowledge."""

__version__ = "0.1.0"
