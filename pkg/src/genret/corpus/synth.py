"""Synthetic corpus generator with a deterministic relevance oracle.

Documents are grouped into topics. Each topic owns a token region of the
vocabulary plus a latent unit vector; each document additionally owns a
globally unique "marker" token. A document opens with its own marker (a
title slot), then a shuffled body quoting the markers of a few topic
siblings once each (citation noise) plus topic background and shared
filler. Queries are anchored on one document and repeat the anchor's
marker with background noise. Term statistics cannot separate the titled
document from the siblings that mention the same marker (equal term
frequency), but a position-aware model can learn what a title means.

Latents are a scaled topic direction plus a scaled doc-unique direction,
so rel gaps between an anchor and its topic siblings are on the same order
as topic-vs-rest gaps. The oracle scores rel(q, d) as the dot product of
latent vectors. Query latents are resampled as needed so every judged
positive scores strictly above every unjudged document, which keeps
teacher margins positive against any negative.
"""

import json

import numpy as np

from genret.corpus.data import Corpus, Query
from genret.errors import ConfigurationError, DataFormatError

FILLER_TOKENS = 24
DOC_CITATIONS = 4       # sibling markers quoted once each in the body
DOC_BACKGROUND = 7      # topic-background tokens per document
DOC_FILLER = 2
QUERY_MARKER_COPIES = 2
QUERY_BACKGROUND = 2
QUERY_FILLER = 1
TOPIC_WEIGHT = 0.67     # latent = TOPIC_WEIGHT * topic + UNIQUE_WEIGHT * doc-unique
UNIQUE_WEIGHT = 0.74    # keeps within-topic margins comparable to cross-topic ones
QUERY_NOISE = 0.1
SECOND_POSITIVE_PROB = 0.1
MAX_NOISE_RETRIES = 20


class OracleTeacher:
    """Deterministic relevance oracle over latent vectors."""

    def __init__(self, query_latents: dict, doc_latents: dict):
        self.query_latents = query_latents
        self.doc_latents = doc_latents

    def rel(self, query_id: str, doc_id: str) -> float:
        return float(np.dot(self.query_latents[query_id], self.doc_latents[doc_id]))

    def margin(self, query_id: str, pos_doc_id: str, neg_doc_id: str) -> float:
        return self.rel(query_id, pos_doc_id) - self.rel(query_id, neg_doc_id)


def _unit(v):
    return v / np.linalg.norm(v)


def generate_synthetic_corpus(n_docs, n_queries, n_topics, dim=16, seed=0):
    """Returns (corpus, queries, qrels, teacher)."""
    if n_docs < 1 or n_queries < 1 or n_topics < 1:
        raise ConfigurationError("n_docs, n_queries, n_topics must all be positive")
    if n_topics > n_docs:
        raise ConfigurationError(f"n_topics={n_topics} exceeds n_docs={n_docs}")
    if dim < 2:
        raise ConfigurationError(f"dim must be >= 2, got {dim}")

    rng = np.random.default_rng(seed)
    doc_topic = np.arange(n_docs) % n_topics

    region = 14
    topic_words = [[f"t{k:02d}w{j:02d}" for j in range(region)] for k in range(n_topics)]
    filler_words = [f"fill{j:02d}" for j in range(FILLER_TOKENS)]
    marker_words = [f"mark{i:05d}" for i in range(n_docs)]

    topic_latent = np.stack([_unit(rng.normal(size=dim)) for _ in range(n_topics)])
    # Zipf-ish topic background shared by all documents of the topic.
    bg_probs = 1.0 / (np.arange(region) + 2.0)
    bg_probs /= bg_probs.sum()

    doc_latent = np.empty((n_docs, dim))
    siblings = [np.flatnonzero(doc_topic == k) for k in range(n_topics)]
    raw_docs = []
    for i in range(n_docs):
        k = doc_topic[i]
        doc_latent[i] = _unit(
            TOPIC_WEIGHT * topic_latent[k] + UNIQUE_WEIGHT * _unit(rng.normal(size=dim))
        )
        others = siblings[k][siblings[k] != i]
        n_cite = min(DOC_CITATIONS, len(others))
        cited = rng.choice(others, size=n_cite, replace=False) if n_cite else []
        body = (
            [marker_words[c] for c in cited]
            + [topic_words[k][j] for j in rng.choice(region, size=DOC_BACKGROUND, p=bg_probs)]
            + [filler_words[j] for j in rng.choice(FILLER_TOKENS, size=DOC_FILLER)]
        )
        order = rng.permutation(len(body))
        words = [marker_words[i]] + [body[j] for j in order]
        raw_docs.append((f"d{i:05d}", " ".join(words)))

    corpus = Corpus.from_raw(raw_docs)
    doc_ids = corpus.doc_ids
    doc_latent_by_id = {doc_ids[i]: doc_latent[i] for i in range(n_docs)}

    anchors = np.concatenate(
        [rng.permutation(n_docs) for _ in range(int(np.ceil(n_queries / n_docs)))]
    )[:n_queries]

    queries = []
    qrels = {}
    query_latents = {}
    for j in range(n_queries):
        i = int(anchors[j])
        k = doc_topic[i]
        words = (
            [marker_words[i]] * QUERY_MARKER_COPIES
            + [topic_words[k][m] for m in rng.choice(region, size=QUERY_BACKGROUND, p=bg_probs)]
            + [filler_words[m] for m in rng.choice(FILLER_TOKENS, size=QUERY_FILLER)]
        )
        order = rng.permutation(len(words))
        qid = f"q{j:05d}"
        raw = " ".join(words[m] for m in order)
        queries.append(Query(qid, corpus.map_tokens(raw.split()), raw))

        # Latent near the anchor; resample noise until the anchor is the
        # strict argmax of rel(q, .). The last attempt drops the noise, and
        # unit doc latents then guarantee rel(q, anchor) = 1 > any other.
        for attempt in range(MAX_NOISE_RETRIES):
            noise = QUERY_NOISE if attempt < MAX_NOISE_RETRIES - 1 else 0.0
            q_lat = doc_latent[i] + noise * rng.normal(size=dim)
            rels = doc_latent @ q_lat
            if n_docs == 1 or rels[i] > np.delete(rels, i).max():
                break
        query_latents[qid] = q_lat
        positives = {doc_ids[i]: 1}

        if n_docs > 2 and rng.random() < SECOND_POSITIVE_PROB:
            order_rel = np.argsort(-rels)
            second, third = int(order_rel[1]), int(order_rel[2])
            if doc_topic[second] == k and rels[second] > rels[third]:
                positives[doc_ids[second]] = 1
        qrels[qid] = positives

    teacher = OracleTeacher(query_latents, doc_latent_by_id)
    return corpus, queries, qrels, teacher


def save_teacher(path, teacher: OracleTeacher) -> None:
    payload = {
        "queries": {k: [float(x) for x in v] for k, v in teacher.query_latents.items()},
        "docs": {k: [float(x) for x in v] for k, v in teacher.doc_latents.items()},
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f)


def load_teacher(path) -> OracleTeacher:
    with open(path, encoding="utf-8") as f:
        payload = json.load(f)
    if "queries" not in payload or "docs" not in payload:
        raise DataFormatError(f"{path}: not a teacher file")
    return OracleTeacher(
        {k: np.asarray(v) for k, v in payload["queries"].items()},
        {k: np.asarray(v) for k, v in payload["docs"].items()},
    )
