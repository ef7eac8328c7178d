import math
from collections import Counter

import numpy as np
import pytest

from genret.corpus import BM25Index, Corpus


def brute_force_bm25(corpus, query_tokens, k1=0.9, b=0.4):
    """Straightforward per-term reference implementation."""
    n = len(corpus)
    lens = [len(d.tokens) for d in corpus.docs]
    avgdl = sum(lens) / n
    df = Counter()
    for d in corpus.docs:
        for t in set(d.tokens):
            df[t] += 1
    scores = {}
    for d in corpus.docs:
        tf = Counter(d.tokens)
        s = 0.0
        for t in query_tokens:
            if df[t] == 0:
                continue
            idf = math.log(1 + (n - df[t] + 0.5) / (df[t] + 0.5))
            denom = tf[t] + k1 * (1 - b + b * len(d.tokens) / avgdl)
            s += idf * tf[t] * (k1 + 1) / denom
        scores[d.doc_id] = s
    return scores


@pytest.fixture(scope="module")
def toy_corpus():
    texts = [
        ("d0", "apple banana cherry"),
        ("d1", "banana banana date"),
        ("d2", "cherry date elder fig"),
        ("d3", "apple apple apple banana"),
        ("d4", "fig grape"),
        ("d5", "grape apple date banana cherry"),
        ("d6", "elder elder elder"),
        ("d7", "date fig grape apple"),
        ("d8", "banana cherry cherry"),
        ("d9", "apple fig"),
    ]
    return Corpus.from_raw(texts)


def test_query_identical_to_unique_document_ranks_it_first(toy_corpus):
    bm25 = BM25Index(toy_corpus)
    doc = toy_corpus.get("d6")
    assert bm25.rank(doc.tokens, 1)[0][0] == "d6"


def test_k_larger_than_corpus_returns_corpus_size(toy_corpus):
    bm25 = BM25Index(toy_corpus)
    out = bm25.rank(toy_corpus.get("d0").tokens, 50)
    assert len(out) == len(toy_corpus)

def test_no_in_vocabulary_terms_gives_empty_list(toy_corpus):
    bm25 = BM25Index(toy_corpus)
    assert bm25.rank((), 5) == []
    assert bm25.rank((9999,), 5) == []


def test_scores_match_brute_force_oracle(toy_corpus):
    bm25 = BM25Index(toy_corpus)
    rng = np.random.default_rng(3)
    vocab_ids = list(toy_corpus.vocab.values())
    for _ in range(25):
        q = tuple(rng.choice(vocab_ids, size=rng.integers(1, 5)))
        expected = brute_force_bm25(toy_corpus, q)
        got = dict(bm25.rank(q, len(toy_corpus)))
        assert set(got) == set(expected)
        for d, s in expected.items():
            assert got[d] == pytest.approx(s, abs=1e-12)


def test_sorted_by_score_desc_then_doc_id_asc(toy_corpus):
    bm25 = BM25Index(toy_corpus)
    rng = np.random.default_rng(4)
    vocab_ids = list(toy_corpus.vocab.values())
    for _ in range(25):
        q = tuple(rng.choice(vocab_ids, size=rng.integers(1, 4)))
        out = bm25.rank(q, len(toy_corpus))
        keys = [(-s, d) for d, s in out]
        assert keys == sorted(keys)


def test_ranking_over_synthetic_corpus_finds_anchor_often(small_synth=None):
    from genret.corpus import generate_synthetic_corpus

    corpus, queries, qrels, _ = generate_synthetic_corpus(60, 30, 4, dim=8, seed=3)
    bm25 = BM25Index(corpus)
    hits = 0
    for q in queries:
        top = [d for d, _ in bm25.rank(q.tokens, 10)]
        hits += any(d in qrels[q.query_id] for d in top)
    assert hits / len(queries) > 0.5
