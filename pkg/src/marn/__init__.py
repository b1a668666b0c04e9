"""Memory-attended recurrent captioning over precomputed video features."""

__version__ = "0.1.0"
