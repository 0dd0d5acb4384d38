"""Long-term provider max-min fair ranking under recommendation feedback loops."""

__version__ = "0.1.0"
