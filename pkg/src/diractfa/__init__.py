"""Dirac propagation and time-frequency analysis on periodic lattices."""
