"""Spectral, equilibrium and stability analysis."""
