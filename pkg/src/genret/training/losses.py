"""Losses: dense margin regression, prefix-decomposed rank loss with the
concave alpha weighting, the multi-objective retention combination, and
seq2seq cross-entropy.

The rank loss at prefix length i regresses the score gap between the
positive and negative docid prefixes onto alpha_i times the teacher margin:

    (S_i(q, c+) - S_i(q, c-) - alpha_i * T)^2

with alpha_i = (1 - beta/i) / (1 - beta/L), which increases concavely in i
and hits exactly 1 at i = L, so the full-length gap regresses onto the true
margin. The multi-objective form adds the same term at every earlier
curriculum checkpoint so longer-prefix phases retain what shorter ones
learned.

Batched *_batch functions compute the mean loss and, when a grads dict is
passed, accumulate analytic gradients for every parameter; correctness is
pinned by central finite differences in the tests.
"""

import numpy as np

from genret.errors import ConfigurationError
from genret.model.config import ModelConfig
from genret.model.network import decode_bwd, decode_fwd, encode_bwd, encode_fwd
from genret.model.scoring import pad_batch, step_score_terms


class AlphaSchedule:
    """alpha_i = (1 - beta/i) / Z with Z = 1 - beta/L; defined for i > beta."""

    def __init__(self, beta: float, L: int):
        if not beta < L:
            raise ConfigurationError(f"beta={beta} must be < L={L}")
        self.beta = float(beta)
        self.L = int(L)
        self.Z = 1.0 - self.beta / self.L

    def alpha(self, i: int) -> float:
        if not i > self.beta:
            raise ConfigurationError(f"alpha undefined at i={i} <= beta={self.beta}")
        return (1.0 - self.beta / i) / self.Z


def curriculum_checkpoints(L: int, base=(4, 8, 16, 32)) -> list:
    """Prefix checkpoints clipped to L; strictly increasing, ends at L."""
    cps = sorted({c for c in base if c < L})
    return [int(c) for c in cps] + [int(L)]


def margin_mse_loss(s_pos: float, s_neg: float, margin: float) -> float:
    return float((s_pos - s_neg - margin) ** 2)


def margin_mse_grad(s_pos: float, s_neg: float, margin: float):
    """(dloss/ds_pos, dloss/ds_neg)."""
    d = 2.0 * (s_pos - s_neg - margin)
    return d, -d


def dense_margin_batch(params, cfg: ModelConfig, q_seqs, pos_seqs, neg_seqs, margins,
                       grads=None) -> float:
    """Mean margin-MSE over dense dot-product scores for a batch of triples.

    The query/positive/negative towers share weights, so all 3B sequences run
    through one stacked forward pass."""
    margins = np.asarray(margins, dtype=np.float64)
    B = len(q_seqs)
    tokens, mask = pad_batch(list(q_seqs) + list(pos_seqs) + list(neg_seqs), cfg)
    enc, ecache = encode_fwd(params, cfg, tokens, mask)
    h, dcache = decode_fwd(params, cfg, enc, mask, np.empty((3 * B, 0), dtype=np.int64))
    vec = h[:, 0, :]
    qv, pv, nv = vec[:B], vec[B : 2 * B], vec[2 * B :]
    s_pos = np.einsum("bd,bd->b", qv, pv)
    s_neg = np.einsum("bd,bd->b", qv, nv)
    resid = s_pos - s_neg - margins
    loss = float((resid**2).mean())
    if grads is not None:
        r = (2.0 / B) * resid
        dvec = np.concatenate(
            [r[:, None] * (pv - nv), r[:, None] * qv, -r[:, None] * qv], axis=0
        )
        d_enc = decode_bwd(dvec[:, None, :], dcache, cfg, grads)
        encode_bwd(d_enc, ecache, cfg, grads)
    return loss


def rank_margin_batch(params, cfg: ModelConfig, q_seqs, pos_codes, neg_codes, margins,
                      terms, grads=None) -> float:
    """Summed prefix rank losses for a batch.

    terms: list of (k, alpha_k) checkpoint pairs; codes must cover the
    largest k. Loss per triple is sum over terms of the alpha-weighted
    margin-MSE at that prefix length; returned value is the batch mean.
    """
    pos_codes = np.asarray(pos_codes, dtype=np.int64)
    neg_codes = np.asarray(neg_codes, dtype=np.int64)
    margins = np.asarray(margins, dtype=np.float64)
    B = len(q_seqs)
    P = max(k for k, _ in terms)
    if pos_codes.shape[1] < P or neg_codes.shape[1] < P:
        raise ConfigurationError(f"codes shorter than largest checkpoint {P}")
    pos_codes = pos_codes[:, :P]
    neg_codes = neg_codes[:, :P]

    tokens, mask = pad_batch(q_seqs, cfg)
    enc, ecache = encode_fwd(params, cfg, tokens, mask)
    # positive and negative docid towers share the query encoding: decode
    # both halves in one stacked pass
    enc2 = np.concatenate([enc, enc], axis=0)
    mask2 = np.concatenate([mask, mask], axis=0)
    codes2 = np.concatenate([pos_codes, neg_codes], axis=0)
    h2, dcache = decode_fwd(params, cfg, enc2, mask2, codes2[:, : P - 1])
    cum = step_score_terms(params["docid_emb"], h2, codes2).cumsum(axis=1)
    pos_cum, neg_cum = cum[:B], cum[B:]

    loss = 0.0
    w = np.zeros((B, P))
    for k, alpha_k in terms:
        resid = pos_cum[:, k - 1] - neg_cum[:, k - 1] - alpha_k * margins
        loss += float((resid**2).mean())
        w[:, :k] += (2.0 / B) * resid[:, None]

    if grads is not None:
        w2 = np.concatenate([w, -w], axis=0)
        idx = np.broadcast_to(np.arange(P), (2 * B, P))
        emb2 = params["docid_emb"][idx, codes2]
        dh2 = w2[:, :, None] * emb2
        np.add.at(grads["docid_emb"], (idx, codes2), w2[:, :, None] * h2[:, :P])
        d_enc2 = decode_bwd(dh2, dcache, cfg, grads)
        d_enc = d_enc2[:B] + d_enc2[B:]
        encode_bwd(d_enc, ecache, cfg, grads)
    return loss


def seq2seq_ce_batch(params, cfg: ModelConfig, q_seqs, targets, grads=None) -> float:
    """Teacher-forced cross-entropy over all L docid positions, mean per
    step and per example."""
    targets = np.asarray(targets, dtype=np.int64)
    B, L = targets.shape
    if L != cfg.L:
        raise ConfigurationError(f"targets must be full length L={cfg.L}")
    tokens, mask = pad_batch(q_seqs, cfg)
    enc, ecache = encode_fwd(params, cfg, tokens, mask)
    h, dcache = decode_fwd(params, cfg, enc, mask, targets[:, : L - 1])
    logits = np.einsum("bld,lvd->blv", h, params["docid_emb"])
    z = logits - logits.max(axis=-1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=-1))
    b_idx = np.arange(B)[:, None]
    l_idx = np.arange(L)[None, :]
    logp = z[b_idx, l_idx, targets] - logsumexp
    loss = float(-logp.mean())
    if grads is not None:
        p = np.exp(z - logsumexp[:, :, None])
        p[b_idx, l_idx, targets] -= 1.0
        dlogits = p / (B * L)
        dh = np.einsum("blv,lvd->bld", dlogits, params["docid_emb"])
        grads["docid_emb"] += np.einsum("blv,bld->lvd", dlogits, h)
        d_enc = decode_bwd(dh, dcache, cfg, grads)
        encode_bwd(d_enc, ecache, cfg, grads)
    return loss


def prefix_rank_loss(params, cfg: ModelConfig, q_tokens, pos_codes, neg_codes, margin,
                     i: int, schedule: AlphaSchedule, grads=None) -> float:
    """Single-triple rank loss at prefix length i."""
    if not 1 <= i <= cfg.L:
        raise ConfigurationError(f"prefix length {i} out of [1, {cfg.L}]")
    return rank_margin_batch(
        params, cfg, [q_tokens], [pos_codes], [neg_codes], [margin],
        [(i, schedule.alpha(i))], grads,
    )


def multi_objective_loss(params, cfg: ModelConfig, q_tokens, pos_codes, neg_codes, margin,
                         i: int, schedule: AlphaSchedule, checkpoints, grads=None) -> float:
    """Rank loss at i plus retention terms at every earlier curriculum
    checkpoint."""
    if i not in checkpoints:
        raise ConfigurationError(f"i={i} is not a curriculum checkpoint {checkpoints}")
    terms = [(k, schedule.alpha(k)) for k in checkpoints if k <= i]
    return rank_margin_batch(
        params, cfg, [q_tokens], [pos_codes], [neg_codes], [margin], terms, grads,
    )


def seq2seq_ce_loss(params, cfg: ModelConfig, q_tokens, docid, grads=None) -> float:
    """Single-pair seq2seq cross-entropy (mean over the L steps)."""
    return seq2seq_ce_batch(params, cfg, [q_tokens], [docid], grads)
