"""Epicure: ingredient graph embeddings, pairing retrieval and direction arithmetic."""

__version__ = "0.1.0"
