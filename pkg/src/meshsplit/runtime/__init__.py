"""Composition of nodes into running systems."""
