"""Pore-scale Stokes-Cahn-Hilliard flow in perforated media and its homogenized limit."""
__version__ = "0.1.0"
