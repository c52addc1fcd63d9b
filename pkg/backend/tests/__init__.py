"""Tests for toruslab."""
