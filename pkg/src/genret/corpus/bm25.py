"""BM25 lexical ranker over the integer-token corpus.

Uses the non-negative idf variant log(1 + (N - df + 0.5) / (df + 0.5)) with
k1=0.9, b=0.4. Query terms contribute with multiplicity. All documents are
scored (zero-overlap documents score 0); ties break by doc_id ascending. A
query with no in-vocabulary terms yields an empty list. The index is
immutable after construction and safe for concurrent ranking.
"""

import math
from collections import Counter

from genret.corpus.data import Corpus


class BM25Index:
    def __init__(self, corpus: Corpus, k1: float = 0.9, b: float = 0.4):
        self.k1 = k1
        self.b = b
        self.doc_ids = corpus.doc_ids
        self.n_docs = len(corpus)
        tfs = [Counter(d.tokens) for d in corpus.docs]
        self.doc_lens = [len(d.tokens) for d in corpus.docs]
        self.avgdl = sum(self.doc_lens) / self.n_docs
        self.postings = {}
        for di, tf in enumerate(tfs):
            for t, f in tf.items():
                self.postings.setdefault(t, []).append((di, f))
        self.idf = {
            t: math.log(1.0 + (self.n_docs - len(plist) + 0.5) / (len(plist) + 0.5))
            for t, plist in self.postings.items()
        }

    def rank(self, query_tokens, k: int):
        """Top-k (doc_id, score), score descending then doc_id ascending."""
        terms = [t for t in query_tokens if t in self.postings]
        if not terms:
            return []
        scores = [0.0] * self.n_docs
        for t, qtf in Counter(terms).items():
            idf = self.idf[t]
            for di, f in self.postings[t]:
                norm = self.k1 * (1.0 - self.b + self.b * self.doc_lens[di] / self.avgdl)
                scores[di] += qtf * idf * f * (self.k1 + 1.0) / (f + norm)
        order = sorted(range(self.n_docs), key=lambda i: (-scores[i], self.doc_ids[i]))
        return [(self.doc_ids[i], scores[i]) for i in order[:k]]
