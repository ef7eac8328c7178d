"""Prefix trie over assigned docids and trie-constrained beam search.

Beam candidates carry cumulative conditional-logit scores; at each depth all
(candidate x valid extension) pairs compete and the top K survive. No docid
outside the trie can ever be emitted. When fewer than K extensions exist the
beam simply carries everything forward. Ties break by code-sequence
lexicographic order so runs are reproducible.

``brute_force_rank`` scores every assigned docid exhaustively with the same
tie rule and is the verification oracle for beam search.
"""

import numpy as np

from genret.errors import ConfigurationError, DataFormatError
from genret.model.config import ModelConfig
from genret.model.network import decode_fwd, encode_fwd, make_decoder_state
from genret.model.scoring import pad_batch, step_score_terms


class _Node:
    __slots__ = ("children", "doc_id")

    def __init__(self):
        self.children = {}
        self.doc_id = None


class PrefixTrie:
    """Trie over fixed-length docids; leaves carry the document id."""

    def __init__(self, L: int):
        self.L = L
        self.root = _Node()
        self.n_docs = 0

    def insert(self, doc_id: str, codes) -> None:
        codes = tuple(int(c) for c in codes)
        if len(codes) != self.L:
            raise DataFormatError(f"docid for {doc_id!r} has length {len(codes)}, expected {self.L}")
        node = self.root
        for c in codes:
            node = node.children.setdefault(c, _Node())
        if node.doc_id is not None:
            raise DataFormatError(f"duplicate docid {codes} ({node.doc_id!r} vs {doc_id!r})")
        node.doc_id = doc_id
        self.n_docs += 1

    def node_at(self, prefix) -> _Node:
        node = self.root
        for c in prefix:
            child = node.children.get(int(c))
            if child is None:
                raise ConfigurationError(f"prefix {tuple(prefix)} is not a valid trie path")
            node = child
        return node

    def valid_extensions(self, prefix) -> list:
        return sorted(self.node_at(prefix).children)

    def contains(self, codes) -> bool:
        node = self.root
        for c in codes:
            node = node.children.get(int(c))
            if node is None:
                return False
        return node.doc_id is not None

    def leaf_count(self, prefix=()) -> int:
        def count(node):
            if node.doc_id is not None:
                return 1
            return sum(count(ch) for ch in node.children.values())

        return count(self.node_at(prefix))


def build_trie(docid_map: dict) -> PrefixTrie:
    """docid_map: {doc_id: length-L code sequence}, all unique."""
    if not docid_map:
        return PrefixTrie(0)
    L = len(next(iter(docid_map.values())))
    trie = PrefixTrie(L)
    for doc_id, codes in docid_map.items():
        trie.insert(doc_id, codes)
    return trie


def _encode_query(params, cfg, query_tokens):
    tokens, mask = pad_batch([query_tokens], cfg)
    enc, _ = encode_fwd(params, cfg, tokens, mask)
    return enc, mask


def _beam(params, cfg: ModelConfig, query_tokens, trie: PrefixTrie, K: int, depth: int):
    """Beam search to the given depth. Returns a list of (codes tuple,
    cumulative score) sorted by (-score, codes)."""
    if K < 1:
        raise ConfigurationError(f"beam width must be >= 1, got {K}")
    if trie.n_docs == 0:
        raise ConfigurationError("cannot search an empty trie")
    if not 1 <= depth <= trie.L:
        raise ConfigurationError(f"depth {depth} out of [1, {trie.L}]")

    enc, mask = _encode_query(params, cfg, query_tokens)
    state = make_decoder_state(params, cfg, enc, mask)
    prefixes = [()]
    nodes = [trie.root]
    scores = np.zeros(1)

    for step in range(depth):
        if step == 0:
            x = params["start_emb"][None, :] + params["dec_pos"][0]
            x = np.repeat(x, len(prefixes), axis=0)
        else:
            last = np.array([p[-1] for p in prefixes])
            x = params["docid_emb"][step - 1][last] + params["dec_pos"][step]
        h = state.step(x)  # (B, D)
        table = params["docid_emb"][step]  # (V, D)
        expanded = []
        for b, node in enumerate(nodes):
            exts = sorted(node.children)
            ext_scores = table[exts] @ h[b] + scores[b]
            for c, s in zip(exts, ext_scores):
                expanded.append((prefixes[b] + (c,), float(s), node.children[c], b))
        expanded.sort(key=lambda e: (-e[1], e[0]))
        kept = expanded[:K]
        prefixes = [e[0] for e in kept]
        scores = np.array([e[1] for e in kept])
        nodes = [e[2] for e in kept]
        state.gather([e[3] for e in kept])

    return [(p, float(s)) for p, s in zip(prefixes, scores)], nodes


def beam_search(params, cfg: ModelConfig, query_tokens, trie: PrefixTrie, K: int):
    """Top-K documents by full-length conditional-logit score."""
    results, nodes = _beam(params, cfg, query_tokens, trie, K, trie.L)
    return [(node.doc_id, score) for (codes, score), node in zip(results, nodes)]


def prefix_truncated_retrieval(params, cfg: ModelConfig, query_tokens, trie: PrefixTrie,
                               K: int, prefix_len: int):
    """Beam search halted at the given depth; returns (prefix codes, score)."""
    results, _ = _beam(params, cfg, query_tokens, trie, K, prefix_len)
    return results


def brute_force_rank(params, cfg: ModelConfig, query_tokens, docid_map: dict,
                     batch_size: int = 256, prefix_len: int = None):
    """Exhaustive scoring of every assigned docid; same tie rule as beam
    search. With ``prefix_len`` the score is truncated to the first i
    positions (documents are still ranked individually)."""
    if not docid_map:
        return []
    doc_ids = list(docid_map)
    codes = np.array([docid_map[d] for d in doc_ids], dtype=np.int64)
    L = codes.shape[1]
    i = L if prefix_len is None else prefix_len
    if not 1 <= i <= L:
        raise ConfigurationError(f"prefix_len {i} out of [1, {L}]")
    enc, mask = _encode_query(params, cfg, query_tokens)
    scores = np.empty(len(doc_ids))
    for lo in range(0, len(doc_ids), batch_size):
        chunk = codes[lo : lo + batch_size, :i]
        B = chunk.shape[0]
        enc_b = np.repeat(enc, B, axis=0)
        mask_b = np.repeat(mask, B, axis=0)
        h, _ = decode_fwd(params, cfg, enc_b, mask_b, chunk[:, :-1])
        scores[lo : lo + B] = step_score_terms(params["docid_emb"], h, chunk).sum(axis=1)
    order = sorted(range(len(doc_ids)), key=lambda i_: (-scores[i_], tuple(codes[i_])))
    return [(doc_ids[i_], float(scores[i_])) for i_ in order]
