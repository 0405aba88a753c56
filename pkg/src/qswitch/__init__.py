"""Quantum-switch process matrices, causal witnesses and experiment simulation."""

__version__ = "0.1.0"
