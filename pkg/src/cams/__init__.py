"""Canonicalized manipulation spaces for hand-object motion: representation, synthesis, metrics."""
__version__ = "0.1.0"
