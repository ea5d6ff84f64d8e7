"""Simulation and analysis tools for ladder-type warm-vapor optical memories."""

__version__ = "0.1.0"
