"""Spectral, arithmetic and simulation services."""
