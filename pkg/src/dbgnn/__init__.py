"""Dirac-Bianconi graph dynamics and DBGNN."""
