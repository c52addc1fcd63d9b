"""Toruslab: dissipation times of noisy toral automorphisms."""

__version__ = "0.1.0"
