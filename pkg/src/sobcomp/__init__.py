"""Numerical verification of Sobolev composition operator and capacity estimates."""

__version__ = "0.1.0"
