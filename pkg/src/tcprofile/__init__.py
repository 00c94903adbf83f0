"""Tropical-cyclone radial wind profiles: parametric labels and a polar CNN profiler."""

__version__ = "0.1.0"
