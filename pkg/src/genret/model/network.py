"""Pre-norm transformer encoder-decoder assembled from the layer primitives.

The decoder consumes a docid prefix: input position 0 is the start embedding,
input position j >= 1 is table j's embedding of code c_j, so a forward pass
over a length-P prefix yields hidden states h_1 .. h_{P+1} under the causal
mask. ``DecoderState`` is the key/value-cached incremental path used by beam
search; it must agree with the full recomputation (asserted in tests).

There is no final layer norm: with zeroed attention/FFN weights the encoder
output reduces exactly to token plus position embeddings.
"""

import numpy as np

from genret.model import layers as L
from genret.model.config import ModelConfig


def encode_fwd(params, cfg: ModelConfig, tokens, mask):
    """tokens: (B, T) int indices (pad slots must hold a valid index);
    mask: (B, T) float 0/1. Returns (enc (B, T, D), cache)."""
    B, T = tokens.shape
    x = params["tok_emb"][tokens] + params["enc_pos"][:T][None, :, :]
    att_mask = L.key_padding_mask(mask)
    caches = []
    for l in range(cfg.n_layers):
        p = f"enc{l}"
        h1, c_ln1 = L.layernorm_fwd(x, params[f"{p}.ln1.g"], params[f"{p}.ln1.b"])
        a, c_att = L.attention_fwd(
            h1, h1,
            params[f"{p}.attn.wq"], params[f"{p}.attn.wk"],
            params[f"{p}.attn.wv"], params[f"{p}.attn.wo"],
            cfg.n_heads, att_mask,
        )
        x = x + a
        h2, c_ln2 = L.layernorm_fwd(x, params[f"{p}.ln2.g"], params[f"{p}.ln2.b"])
        f, c_ff = L.ffn_fwd(
            h2, params[f"{p}.ff.w1"], params[f"{p}.ff.b1"],
            params[f"{p}.ff.w2"], params[f"{p}.ff.b2"],
        )
        x = x + f
        caches.append((c_ln1, c_att, c_ln2, c_ff))
    return x, (tokens, T, caches)


def encode_bwd(d_out, cache, cfg: ModelConfig, grads):
    tokens, T, caches = cache
    dx = d_out
    for l in reversed(range(cfg.n_layers)):
        p = f"enc{l}"
        c_ln1, c_att, c_ln2, c_ff = caches[l]
        dh2, dw1, db1, dw2, db2 = L.ffn_bwd(dx, c_ff)
        grads[f"{p}.ff.w1"] += dw1
        grads[f"{p}.ff.b1"] += db1
        grads[f"{p}.ff.w2"] += dw2
        grads[f"{p}.ff.b2"] += db2
        dres, dg2, db_2 = L.layernorm_bwd(dh2, c_ln2)
        grads[f"{p}.ln2.g"] += dg2
        grads[f"{p}.ln2.b"] += db_2
        dx = dx + dres
        dxq, dxkv, dwq, dwk, dwv, dwo = L.attention_bwd(dx, c_att)
        grads[f"{p}.attn.wq"] += dwq
        grads[f"{p}.attn.wk"] += dwk
        grads[f"{p}.attn.wv"] += dwv
        grads[f"{p}.attn.wo"] += dwo
        dres, dg1, db_1 = L.layernorm_bwd(dxq + dxkv, c_ln1)
        grads[f"{p}.ln1.g"] += dg1
        grads[f"{p}.ln1.b"] += db_1
        dx = dx + dres
    np.add.at(grads["tok_emb"], tokens, dx)
    grads["enc_pos"][:T] += dx.sum(axis=0)


def _decoder_inputs(params, codes):
    """(B, P) codes -> (B, P+1, D) input embeddings (start token + E_j[c_j])."""
    B, P = codes.shape
    D = params["start_emb"].shape[0]
    inp = np.empty((B, P + 1, D))
    inp[:, 0, :] = params["start_emb"]
    if P > 0:
        inp[:, 1:, :] = params["docid_emb"][np.arange(P)[None, :], codes]
    return inp + params["dec_pos"][: P + 1][None, :, :]


def decode_fwd(params, cfg: ModelConfig, enc, enc_mask, codes):
    """codes: (B, P) with 0 <= P < L. Returns (h (B, P+1, D), cache)."""
    B, P = codes.shape
    x = _decoder_inputs(params, codes)
    S = P + 1
    self_mask = L.causal_mask(S)
    cross_mask = L.key_padding_mask(enc_mask)
    # normalize the encoder stream once for all cross-attention layers; the
    # raw residual-stream scale is far below unit and would starve attention
    enc_n, c_encln = L.layernorm_fwd(enc, params["dec_enc_ln.g"], params["dec_enc_ln.b"])
    caches = []
    for l in range(cfg.n_layers):
        p = f"dec{l}"
        h1, c_ln1 = L.layernorm_fwd(x, params[f"{p}.ln1.g"], params[f"{p}.ln1.b"])
        a, c_self = L.attention_fwd(
            h1, h1,
            params[f"{p}.self.wq"], params[f"{p}.self.wk"],
            params[f"{p}.self.wv"], params[f"{p}.self.wo"],
            cfg.n_heads, self_mask,
        )
        x = x + a
        h2, c_ln2 = L.layernorm_fwd(x, params[f"{p}.ln2.g"], params[f"{p}.ln2.b"])
        c, c_cross = L.attention_fwd(
            h2, enc_n,
            params[f"{p}.cross.wq"], params[f"{p}.cross.wk"],
            params[f"{p}.cross.wv"], params[f"{p}.cross.wo"],
            cfg.n_heads, cross_mask,
        )
        x = x + c
        h3, c_ln3 = L.layernorm_fwd(x, params[f"{p}.ln3.g"], params[f"{p}.ln3.b"])
        f, c_ff = L.ffn_fwd(
            h3, params[f"{p}.ff.w1"], params[f"{p}.ff.b1"],
            params[f"{p}.ff.w2"], params[f"{p}.ff.b2"],
        )
        x = x + f
        caches.append((c_ln1, c_self, c_ln2, c_cross, c_ln3, c_ff))
    return x, (codes, enc.shape, c_encln, caches)


def decode_bwd(dh, cache, cfg: ModelConfig, grads):
    """Returns d_enc to be chained into encode_bwd."""
    codes, enc_shape, c_encln, caches = cache
    B, P = codes.shape
    dx = dh
    d_enc = np.zeros(enc_shape)
    for l in reversed(range(cfg.n_layers)):
        p = f"dec{l}"
        c_ln1, c_self, c_ln2, c_cross, c_ln3, c_ff = caches[l]
        dh3, dw1, db1, dw2, db2 = L.ffn_bwd(dx, c_ff)
        grads[f"{p}.ff.w1"] += dw1
        grads[f"{p}.ff.b1"] += db1
        grads[f"{p}.ff.w2"] += dw2
        grads[f"{p}.ff.b2"] += db2
        dres, dg, db = L.layernorm_bwd(dh3, c_ln3)
        grads[f"{p}.ln3.g"] += dg
        grads[f"{p}.ln3.b"] += db
        dx = dx + dres
        dxq, dxkv, dwq, dwk, dwv, dwo = L.attention_bwd(dx, c_cross)
        grads[f"{p}.cross.wq"] += dwq
        grads[f"{p}.cross.wk"] += dwk
        grads[f"{p}.cross.wv"] += dwv
        grads[f"{p}.cross.wo"] += dwo
        d_enc += dxkv
        dres, dg, db = L.layernorm_bwd(dxq, c_ln2)
        grads[f"{p}.ln2.g"] += dg
        grads[f"{p}.ln2.b"] += db
        dx = dx + dres
        dxq, dxkv, dwq, dwk, dwv, dwo = L.attention_bwd(dx, c_self)
        grads[f"{p}.self.wq"] += dwq
        grads[f"{p}.self.wk"] += dwk
        grads[f"{p}.self.wv"] += dwv
        grads[f"{p}.self.wo"] += dwo
        dres, dg, db = L.layernorm_bwd(dxq + dxkv, c_ln1)
        grads[f"{p}.ln1.g"] += dg
        grads[f"{p}.ln1.b"] += db
        dx = dx + dres
    grads["start_emb"] += dx[:, 0, :].sum(axis=0)
    if P > 0:
        np.add.at(grads["docid_emb"], (np.broadcast_to(np.arange(P), (B, P)), codes), dx[:, 1:, :])
    grads["dec_pos"][: P + 1] += dx.sum(axis=0)
    d_enc, dg, db = L.layernorm_bwd(d_enc, c_encln)
    grads["dec_enc_ln.g"] += dg
    grads["dec_enc_ln.b"] += db
    return d_enc


class DecoderState:
    """Incremental decoding with cached keys/values, forward only.

    Cross-attention keys/values are projected from the encoder output once;
    self-attention keys/values are appended step by step. ``gather`` reorders
    the batch dimension when beam candidates branch or die.
    """

    def __init__(self, params, cfg: ModelConfig, enc, enc_mask):
        self.params = params
        self.cfg = cfg
        self.enc = enc
        self.cross_mask = L.key_padding_mask(enc_mask)  # (B,1,1,Tk)
        self.t = 0
        B = enc.shape[0]
        self.self_k = [np.zeros((B, cfg.L, cfg.D)) for _ in range(cfg.n_layers)]
        self.self_v = [np.zeros((B, cfg.L, cfg.D)) for _ in range(cfg.n_layers)]
        enc_n, _ = L.layernorm_fwd(enc, params["dec_enc_ln.g"], params["dec_enc_ln.b"])
        self.cross_k = []
        self.cross_v = []
        for l in range(cfg.n_layers):
            self.cross_k.append(L._split_heads(enc_n @ params[f"dec{l}.cross.wk"], cfg.n_heads))
            self.cross_v.append(L._split_heads(enc_n @ params[f"dec{l}.cross.wv"], cfg.n_heads))

    def gather(self, idx):
        """Reorder/duplicate batch rows to follow surviving beam candidates."""
        idx = np.asarray(idx)
        self.enc = self.enc[idx]
        self.cross_mask = self.cross_mask[idx]
        self.self_k = [k[idx] for k in self.self_k]
        self.self_v = [v[idx] for v in self.self_v]
        self.cross_k = [k[idx] for k in self.cross_k]
        self.cross_v = [v[idx] for v in self.cross_v]

    @property
    def batch(self):
        return self.enc.shape[0]

    def step(self, x):
        """Advance one position. x: (B, D) input embedding (with position
        embedding added). Returns the new hidden state (B, D)."""
        p, cfg = self.params, self.cfg
        H = cfg.n_heads
        t = self.t
        x = x[:, None, :]  # (B,1,D)
        for l in range(cfg.n_layers):
            pre = f"dec{l}"
            h1, _ = L.layernorm_fwd(x, p[f"{pre}.ln1.g"], p[f"{pre}.ln1.b"])
            self.self_k[l][:, t, :] = h1[:, 0, :] @ p[f"{pre}.self.wk"]
            self.self_v[l][:, t, :] = h1[:, 0, :] @ p[f"{pre}.self.wv"]
            q = L._split_heads(h1 @ p[f"{pre}.self.wq"], H)
            k = L._split_heads(self.self_k[l][:, : t + 1, :], H)
            v = L._split_heads(self.self_v[l][:, : t + 1, :], H)
            scale = 1.0 / np.sqrt(cfg.head_dim)
            a = L.softmax((q @ k.transpose(0, 1, 3, 2)) * scale, axis=-1)
            x = x + L._merge_heads(a @ v) @ p[f"{pre}.self.wo"]
            h2, _ = L.layernorm_fwd(x, p[f"{pre}.ln2.g"], p[f"{pre}.ln2.b"])
            q = L._split_heads(h2 @ p[f"{pre}.cross.wq"], H)
            scores = (q @ self.cross_k[l].transpose(0, 1, 3, 2)) * scale + self.cross_mask
            a = L.softmax(scores, axis=-1)
            x = x + L._merge_heads(a @ self.cross_v[l]) @ p[f"{pre}.cross.wo"]
            h3, _ = L.layernorm_fwd(x, p[f"{pre}.ln3.g"], p[f"{pre}.ln3.b"])
            f, _ = L.ffn_fwd(h3, p[f"{pre}.ff.w1"], p[f"{pre}.ff.b1"],
                             p[f"{pre}.ff.w2"], p[f"{pre}.ff.b2"])
            x = x + f
        self.t = t + 1
        return x[:, 0, :]


def make_decoder_state(params, cfg: ModelConfig, enc, enc_mask) -> DecoderState:
    return DecoderState(params, cfg, enc, enc_mask)
