"""Static figure rendering for the switched-optimization experiment CSVs."""

__version__ = "0.1.0"

from .render import FigureSpec, build_figure, render

__all__ = ["FigureSpec", "build_figure", "render"]
