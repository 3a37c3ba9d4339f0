"""Contrastive sequence-to-sequence generation of query intent descriptions."""

__version__ = "0.1.0"
