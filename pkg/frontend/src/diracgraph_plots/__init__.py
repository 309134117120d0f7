"""Figure rendering for the diracgraph solver's CSV/JSON artifacts."""
from .render import KINDS, FigureRequest, RenderResult, render
from .schemas import SchemaError

__all__ = ["FigureRequest", "KINDS", "RenderResult", "SchemaError", "render"]

__version__ = "0.1.0"
