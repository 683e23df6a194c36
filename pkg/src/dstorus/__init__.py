"""Hyperbolic-elliptic Davey-Stewartson dynamics on scaled two-dimensional tori."""

__version__ = "0.1.0"
