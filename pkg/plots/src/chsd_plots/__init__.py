"""Figures from chsd CSV outputs."""

from .figures import (FigureSpec, SchemaMismatch, TooFewLevels, plot_energy,
                      plot_rates)

__all__ = ["FigureSpec", "SchemaMismatch", "TooFewLevels", "plot_energy",
           "plot_rates"]
__version__ = "0.1.0"
