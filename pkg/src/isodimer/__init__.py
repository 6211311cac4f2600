"""Dimer models on bipartite isoradial graphs."""

__version__ = "0.1.0"
