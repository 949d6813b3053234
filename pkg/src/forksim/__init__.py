"""Microsimulation of a three-road fork with an unsignalized roundabout."""

__version__ = "0.1.0"
