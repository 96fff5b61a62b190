"""Cycle-level simulator of a tiled 2D-mesh NoC split across emulation nodes."""

__version__ = "0.1.0"
