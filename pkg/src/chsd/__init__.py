"""Decoupled Cahn-Hilliard-Stokes-Darcy finite-element simulator."""

__version__ = "0.1.0"
