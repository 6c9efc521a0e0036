"""Low-lying zeros of quadratic Dirichlet L-functions."""

__version__ = "0.1.0"
