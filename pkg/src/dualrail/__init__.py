"""Compile linear controller designs to dual-rail chemistry and check whether it stays stable."""

__version__ = "0.1.0"
