"""Linearized field dislocation dynamics on a one-dimensional slab."""

__version__ = "0.1.0"
