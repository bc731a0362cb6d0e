"""Edgeworth expansion errors for sums of discrete random variables and
their lattice-sum limit laws."""

__version__ = "0.1.0"
