"""Boolean continuum-percolation laboratory on E2, E3 and the hyperbolic plane."""
__version__ = "0.1.0"
