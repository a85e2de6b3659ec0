"""Generalization certificates for hypergraph neural networks."""

__version__ = "0.1.0"
