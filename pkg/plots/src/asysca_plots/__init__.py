"""Headless figure rendering for asysca CSV outputs.

The package is deliberately decoupled from the asysca internals: it reads
only the documented CSV schemas (aggregate time series, perturbation
sweeps, and the quadratic rate benchmark) and writes SVG or PNG files.
"""

from .render import FigureSpec, MissingColumnError, render_sweep, render_timeseries

__all__ = [
    "FigureSpec",
    "MissingColumnError",
    "render_sweep",
    "render_timeseries",
]

__version__ = "0.1.0"
