from .render import FigureSpec, RenderError, load_spec, render

__all__ = ["FigureSpec", "RenderError", "load_spec", "render"]
__version__ = "0.1.0"
