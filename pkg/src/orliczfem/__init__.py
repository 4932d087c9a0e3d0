"""Finite element solver for monotone elliptic inclusions with Orlicz growth and L1 data."""

__version__ = "0.1.0"
