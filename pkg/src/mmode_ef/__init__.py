"""Artificial M-mode images from echo videos and EF estimation models."""
__version__ = "0.1.0"
