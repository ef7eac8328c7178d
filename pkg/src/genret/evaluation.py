"""Retrieval metrics, TREC run-file I/O, and prefix-survival diagnostics.

Metric conventions follow trec_eval: MRR uses binary relevance (grade >= 1),
NDCG uses gain 2^rel - 1 with a log2(rank + 1) discount, and queries without
judged positives are excluded from the averages. Run queries missing from
the qrels are excluded and counted. Everything here is a pure function over
immutable inputs.
"""

import json
import math
from dataclasses import dataclass

from genret.errors import DataFormatError
from genret.search import PrefixTrie, prefix_truncated_retrieval


@dataclass
class MetricReport:
    name: str
    k: int
    mean: float
    per_query: dict
    n_queries: int
    n_excluded: int  # run queries with no qrels entry


def _judged(qrels):
    return {qid: rels for qid, rels in qrels.items() if rels}


def _evaluate(run, qrels, k, per_query_fn, name):
    judged = _judged(qrels)
    n_excluded = sum(1 for qid in run if qid not in judged)
    per_query = {}
    for qid, rels in judged.items():
        ranking = [doc_id for doc_id, _ in run.get(qid, [])][:k]
        per_query[qid] = per_query_fn(ranking, rels)
    mean = sum(per_query.values()) / len(per_query) if per_query else 0.0
    return MetricReport(name, k, mean, per_query, len(per_query), n_excluded)


def mrr_at_k(run, qrels, k: int) -> MetricReport:
    """Reciprocal rank of the first relevant document within the top k."""
    def rr(ranking, rels):
        for rank, doc_id in enumerate(ranking, 1):
            if doc_id in rels:
                return 1.0 / rank
        return 0.0
    return _evaluate(run, qrels, k, rr, f"mrr@{k}")


def recall_at_k(run, qrels, k: int) -> MetricReport:
    def recall(ranking, rels):
        return sum(1 for d in ranking if d in rels) / len(rels)
    return _evaluate(run, qrels, k, recall, f"recall@{k}")


def ndcg_at_k(run, qrels, k: int) -> MetricReport:
    """Graded NDCG with gain 2^rel - 1; all-zero-gain queries score 0."""
    def ndcg(ranking, rels):
        dcg = sum(
            (2 ** rels[d] - 1) / math.log2(rank + 1)
            for rank, d in enumerate(ranking, 1)
            if d in rels
        )
        ideal_gains = sorted(rels.values(), reverse=True)[:k]
        idcg = sum((2**g - 1) / math.log2(rank + 1) for rank, g in enumerate(ideal_gains, 1))
        return dcg / idcg if idcg > 0 else 0.0
    return _evaluate(run, qrels, k, ndcg, f"ndcg@{k}")


def prefix_survival(params, cfg, trie: PrefixTrie, docid_map, queries, qrels, K: int,
                    checkpoints) -> dict:
    """For each prefix length i: the fraction of a query's relevant docids
    whose length-i prefix survives in the depth-i beam of width K, averaged
    over queries with judged positives. At i = L this equals recall@K of the
    full beam run."""
    judged = _judged(qrels)
    rates = {}
    for i in checkpoints:
        per_query = []
        for q in queries:
            rels = judged.get(q.query_id)
            if not rels:
                continue
            kept = {codes[:i] for codes, _ in
                    prefix_truncated_retrieval(params, cfg, q.tokens, trie, K, i)}
            hit = sum(1 for d in rels if d in docid_map and tuple(docid_map[d])[:i] in kept)
            per_query.append(hit / len(rels))
        rates[i] = sum(per_query) / len(per_query) if per_query else 0.0
    return rates


def write_run(path, run, tag: str = "genret") -> None:
    """TREC run format: query_id Q0 doc_id rank score tag. Scores are
    printed with 6 decimals and must be non-increasing per query."""
    with open(path, "w", encoding="utf-8") as f:
        for qid, ranking in run.items():
            for rank, (doc_id, score) in enumerate(ranking, 1):
                f.write(f"{qid} Q0 {doc_id} {rank} {score:.6f} {tag}\n")


def read_run(path) -> dict:
    """Parse and validate a TREC run file: contiguous ranks from 1 and
    non-increasing scores per query."""
    run = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 6:
                raise DataFormatError(f"{path}:{lineno}: expected 6 fields, got {len(parts)}")
            qid, _, doc_id, rank_s, score_s = parts[:5]
            try:
                rank = int(rank_s)
                score = float(score_s)
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: bad rank or score")
            ranking = run.setdefault(qid, [])
            if rank != len(ranking) + 1:
                raise DataFormatError(
                    f"{path}:{lineno}: rank {rank} not contiguous (expected {len(ranking) + 1})"
                )
            if ranking and score > ranking[-1][1]:
                raise DataFormatError(f"{path}:{lineno}: scores increase at rank {rank}")
            ranking.append((doc_id, score))
    return run


def metrics_to_json(path, reports) -> None:
    payload = {
        r.name: {
            "mean": r.mean,
            "per_query": r.per_query,
            "n_queries": r.n_queries,
            "n_excluded": r.n_excluded,
        }
        for r in reports
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
