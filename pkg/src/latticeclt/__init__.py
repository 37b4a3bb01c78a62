"""Lattice point counts in dyadic domains: counting, sampling and CLT diagnostics."""

__version__ = "0.1.0"
