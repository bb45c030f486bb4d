"""Weighted hyperbolic-type metrics on sampled spaces, with audits and experiments."""

__version__ = "0.1.0"
