"""Relevance scoring on top of the encoder-decoder.

Two scoring functions are provided: the additive conditional-logit prefix
score sum_i E_i[c_i] . h_i (used for ranking and beam search) and the
log-conditional-probability score sum_i log softmax(E_i . h_i)[c_i] (used
only by seq2seq pretraining). The dense document/query representation is the
decoder's first hidden state given only the start token.
"""

import numpy as np

from genret.errors import DataFormatError
from genret.model.config import ModelConfig
from genret.model.layers import softmax
from genret.model.network import decode_fwd, encode_fwd


def _as_token_array(tokens, cfg: ModelConfig):
    arr = np.asarray(tokens, dtype=np.int64)
    if arr.ndim != 1 or arr.size == 0:
        raise DataFormatError("token sequence must be non-empty and 1-d")
    if arr.size > cfg.max_seq_len:
        raise DataFormatError(f"sequence length {arr.size} exceeds max_seq_len {cfg.max_seq_len}")
    if arr.min() < 0 or arr.max() >= cfg.token_vocab:
        raise DataFormatError("token id out of vocabulary range")
    return arr


def _check_prefix(prefix, cfg: ModelConfig, max_len):
    codes = np.asarray(prefix, dtype=np.int64).reshape(-1)
    if codes.size > max_len:
        raise DataFormatError(f"prefix length {codes.size} out of range (max {max_len})")
    if codes.size and (codes.min() < 0 or codes.max() >= cfg.V):
        raise DataFormatError("docid code out of range")
    return codes


def encode(params, cfg: ModelConfig, tokens):
    """Contextual encoding of one token sequence. Returns (T, D)."""
    arr = _as_token_array(tokens, cfg)
    enc, _ = encode_fwd(params, cfg, arr[None, :], np.ones((1, arr.size)))
    return enc[0]


def _decode_states(params, cfg: ModelConfig, enc, prefix):
    """Hidden states h_1..h_{P+1} for a single query encoding (T, D)."""
    h, _ = decode_fwd(params, cfg, enc[None, :, :], np.ones((1, enc.shape[0])), prefix[None, :])
    return h[0]


def decode_hidden(params, cfg: ModelConfig, enc, prefix):
    """h_{|prefix|+1}: the hidden state for the next docid position."""
    codes = _check_prefix(prefix, cfg, cfg.L - 1)
    return _decode_states(params, cfg, enc, codes)[-1]


def dense_representation(params, cfg: ModelConfig, tokens):
    """Decoder's first hidden state given the start token only; identical
    pathway for documents and queries."""
    return decode_hidden(params, cfg, encode(params, cfg, tokens), [])


def dense_representations(params, cfg: ModelConfig, token_seqs, batch_size=64):
    """Batched dense vectors for many token sequences. Returns (N, D)."""
    out = np.empty((len(token_seqs), cfg.D))
    for lo in range(0, len(token_seqs), batch_size):
        chunk = token_seqs[lo : lo + batch_size]
        tokens, mask = pad_batch(chunk, cfg)
        enc, _ = encode_fwd(params, cfg, tokens, mask)
        h, _ = decode_fwd(params, cfg, enc, mask, np.empty((len(chunk), 0), dtype=np.int64))
        out[lo : lo + len(chunk)] = h[:, 0, :]
    return out


def pad_batch(token_seqs, cfg: ModelConfig):
    """Right-pad sequences to a common length; pad slots use index 0 and are
    masked out. Returns (tokens (B, T), mask (B, T))."""
    seqs = [_as_token_array(t, cfg) for t in token_seqs]
    T = max(s.size for s in seqs)
    tokens = np.zeros((len(seqs), T), dtype=np.int64)
    mask = np.zeros((len(seqs), T))
    for i, s in enumerate(seqs):
        tokens[i, : s.size] = s
        mask[i, : s.size] = 1.0
    return tokens, mask


def step_score_terms(docid_emb, hidden, codes):
    """Per-position dot products E_i[c_i] . h_i.

    docid_emb: (L, V, D); hidden: (B, P, D) holding h_1..h_P; codes: (B, P).
    Returns (B, P).
    """
    P = codes.shape[1]
    emb = docid_emb[np.arange(P)[None, :], codes]  # (B, P, D)
    return np.einsum("bpd,bpd->bp", emb, hidden[:, :P, :])


def prefix_score_from_hidden(docid_emb, hidden, codes):
    """Conditional-logit score of one prefix from precomputed hidden states.

    hidden: (P, D) rows h_1..h_P; codes: length-P sequence.
    """
    codes = np.asarray(codes, dtype=np.int64).reshape(1, -1)
    if codes.size == 0:
        return 0.0
    return float(step_score_terms(docid_emb, hidden[None, :, :], codes).sum())


def prefix_score(params, cfg: ModelConfig, enc, prefix):
    """Cumulative conditional-logit score of a docid prefix; empty prefix
    scores 0 so beam search can initialize uniformly."""
    codes = _check_prefix(prefix, cfg, cfg.L)
    if codes.size == 0:
        return 0.0
    hidden = _decode_states(params, cfg, enc, codes[:-1])
    return prefix_score_from_hidden(params["docid_emb"], hidden, codes)


def log_prob_score(params, cfg: ModelConfig, enc, docid):
    """Sum over positions of log softmax(E_i . h_i)[c_i] for a full docid."""
    codes = _check_prefix(docid, cfg, cfg.L)
    if codes.size != cfg.L:
        raise DataFormatError(f"docid must have length L={cfg.L}, got {codes.size}")
    hidden = _decode_states(params, cfg, enc, codes[:-1])  # (L, D)
    total = 0.0
    for i in range(cfg.L):
        logits = params["docid_emb"][i] @ hidden[i]  # (V,)
        total += float(np.log(softmax(logits)[codes[i]]))
    return total
