"""Negative mining and training-triple assembly.

Miners produce a per-query pool of candidate negatives (top-K retrieved,
judged positives removed); ``sample_triples`` then draws one negative per
(query, positive) pair per epoch with a seeded RNG, attaching the teacher
margin. Queries without judged positives are skipped and counted.

Triples file format: query_id<TAB>pos_doc_id<TAB>neg_doc_id<TAB>margin.
"""

from dataclasses import dataclass, field

import numpy as np

from genret.corpus.bm25 import BM25Index
from genret.corpus.data import Corpus
from genret.errors import DataFormatError
from genret.model.config import ModelConfig
from genret.model.scoring import dense_representations
from genret.search import PrefixTrie, beam_search


@dataclass(frozen=True)
class TrainingTriple:
    query_id: str
    pos_doc_id: str
    neg_doc_id: str
    margin: float

    def __post_init__(self):
        if self.pos_doc_id == self.neg_doc_id:
            raise DataFormatError(f"triple for {self.query_id!r} has pos == neg")
        if not np.isfinite(self.margin):
            raise DataFormatError(f"triple for {self.query_id!r} has non-finite margin")


@dataclass
class NegativePool:
    candidates: dict = field(default_factory=dict)  # query_id -> [neg doc_id]
    positives: dict = field(default_factory=dict)   # query_id -> [pos doc_id]
    skipped: int = 0                                # queries without positives


def _build_pool(ranked_by_query, queries, qrels, K) -> NegativePool:
    pool = NegativePool()
    for q in queries:
        pos = qrels.get(q.query_id, {})
        if not pos:
            pool.skipped += 1
            continue
        ranked = ranked_by_query(q)
        negs = [d for d, _ in ranked[:K] if d not in pos]
        pool.candidates[q.query_id] = negs
        pool.positives[q.query_id] = sorted(pos)
    return pool


def mine_negatives_bm25(bm25: BM25Index, queries, qrels, K: int = 100) -> NegativePool:
    return _build_pool(lambda q: bm25.rank(q.tokens, K), queries, qrels, K)


def mine_negatives_dense(params, cfg: ModelConfig, corpus: Corpus, queries, qrels,
                         K: int = 100, doc_vectors=None) -> NegativePool:
    """Exact top-K by dense dot product (no approximate index)."""
    if doc_vectors is None:
        doc_vectors = dense_representations(params, cfg, [d.tokens for d in corpus.docs])
    doc_ids = corpus.doc_ids
    q_with_pos = [q for q in queries if qrels.get(q.query_id)]
    q_vectors = dense_representations(params, cfg, [q.tokens for q in q_with_pos])
    top = {}
    for qi, q in enumerate(q_with_pos):
        scores = doc_vectors @ q_vectors[qi]
        order = np.argsort(-scores, kind="stable")[:K]
        top[q.query_id] = [(doc_ids[i], float(scores[i])) for i in order]
    return _build_pool(lambda q: top[q.query_id], queries, qrels, K)


def mine_negatives_beam(params, cfg: ModelConfig, trie: PrefixTrie, queries, qrels,
                        K: int = 100) -> NegativePool:
    """Candidates come from trie-constrained beam search."""
    return _build_pool(
        lambda q: beam_search(params, cfg, q.tokens, trie, K), queries, qrels, K
    )


def sample_triples(pool: NegativePool, teacher, seed: int, epoch: int) -> list:
    """One uniformly drawn negative per (query, positive) pair; deterministic
    in (pool, seed, epoch)."""
    rng = np.random.default_rng([seed, epoch])
    triples = []
    for qid, negs in pool.candidates.items():
        if not negs:
            continue
        for pos in pool.positives[qid]:
            neg = negs[int(rng.integers(len(negs)))]
            triples.append(TrainingTriple(qid, pos, neg, teacher.margin(qid, pos, neg)))
    return triples


def write_triples(path, triples) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for t in triples:
            f.write(f"{t.query_id}\t{t.pos_doc_id}\t{t.neg_doc_id}\t{t.margin!r}\n")


def load_triples(path) -> list:
    triples = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise DataFormatError(f"{path}:{lineno}: expected 4 fields")
            try:
                margin = float(parts[3])
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: bad margin {parts[3]!r}")
            triples.append(TrainingTriple(parts[0], parts[1], parts[2], margin))
    return triples
