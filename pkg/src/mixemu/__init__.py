"""Reaction-diffusion mixing simulator and machine-learning emulator workbench."""

__version__ = "0.1.0"
