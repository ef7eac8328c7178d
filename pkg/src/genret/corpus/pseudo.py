"""Pseudo-query generation: seeded contiguous spans with term dropout.

Stands in for a neural query generator; the spans act as input proxies that
teach the model to map document surface forms to their docids.
"""

import zlib

import numpy as np

from genret.corpus.data import Document, Query, tokenize
from genret.errors import ConfigurationError

SPAN_MIN = 4
SPAN_MAX = 12
DROPOUT = 0.15


def generate_pseudo_queries(doc: Document, n: int, seed: int, vocab: dict) -> list:
    """n pseudo queries for one document; output depends only on
    (doc, n, seed). Documents shorter than the minimum span are copied
    whole."""
    if n < 1:
        raise ConfigurationError(f"n must be >= 1, got {n}")
    words = tokenize(doc.raw)
    rng = np.random.default_rng([seed, zlib.crc32(doc.doc_id.encode("utf-8"))])
    out = []
    for j in range(n):
        if len(words) < SPAN_MIN:
            span = list(words)
        else:
            span_len = min(int(rng.integers(SPAN_MIN, SPAN_MAX + 1)), len(words))
            start = int(rng.integers(0, len(words) - span_len + 1))
            span = words[start : start + span_len]
            keep = rng.random(len(span)) >= DROPOUT
            if keep.any():
                span = [w for w, kp in zip(span, keep) if kp]
        raw = " ".join(span)
        tokens = tuple(vocab[w] for w in span if w in vocab)
        out.append(Query(f"{doc.doc_id}-pq{j}", tokens, raw))
    return out
