"""Panel IV estimation of research-funding effects on scholar performance."""

__version__ = "0.1.0"
