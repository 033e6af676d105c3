"""Conformal density metrics on planar domains and dimension estimates for their boundaries."""

__version__ = "0.1.0"
