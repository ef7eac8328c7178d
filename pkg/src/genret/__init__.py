"""Generative retrieval engine: relevance-quantized document identifiers,
prefix-aware ranking optimization, and trie-constrained beam search."""

__version__ = "0.1.0"
