"""Random walks on hyperbolic Poisson-Delaunay graphs and Fuchsian groups."""

__version__ = "0.1.0"
