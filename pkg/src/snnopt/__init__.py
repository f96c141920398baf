"""Spiking-network solvers for NNLS and l1 minimization with diagnostics."""

__version__ = "0.1.0"
