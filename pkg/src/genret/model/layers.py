"""Forward/backward primitives for the explicitly coded computation graph.

Every *_fwd returns (output, cache); the paired *_bwd consumes the upstream
gradient plus the cache and returns input/parameter gradients. All math is
float64. Gradient correctness is enforced by finite-difference tests, not by
construction.
"""

import numpy as np

NEG_INF = -1e30  # additive mask value; exp() underflows to exactly 0.0

_GELU_C = 0.7978845608028654  # sqrt(2/pi)
_GELU_K = 0.044715


def gelu_fwd(x):
    x2 = x * x
    u = _GELU_C * (x + _GELU_K * x2 * x)
    t = np.tanh(u)
    return 0.5 * x * (1.0 + t), (x, x2, t)


def gelu_bwd(dy, cache):
    x, x2, t = cache
    du = _GELU_C * (1.0 + 3.0 * _GELU_K * x2)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


def layernorm_fwd(x, g, b, eps=1e-6):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xh = xc * inv
    return g * xh + b, (xh, inv, g)


def layernorm_bwd(dy, cache):
    xh, inv, g = cache
    dg = np.sum(dy * xh, axis=tuple(range(dy.ndim - 1)))
    db = np.sum(dy, axis=tuple(range(dy.ndim - 1)))
    dxh = dy * g
    m1 = dxh.mean(axis=-1, keepdims=True)
    m2 = (dxh * xh).mean(axis=-1, keepdims=True)
    dx = inv * (dxh - m1 - xh * m2)
    return dx, dg, db


def _linear_fwd(x, w):
    # x: (..., Din), w: (Din, Dout)
    return x @ w


def _linear_bwd(x, w, dy):
    din = x.reshape(-1, x.shape[-1])
    dout = dy.reshape(-1, dy.shape[-1])
    dw = din.T @ dout
    dx = dy @ w.T
    return dx, dw


def _split_heads(x, n_heads):
    B, T, D = x.shape
    return x.reshape(B, T, n_heads, D // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    B, H, T, Dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, T, H * Dh)


def softmax(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def attention_fwd(xq, xkv, wq, wk, wv, wo, n_heads, mask_add):
    """Multi-head attention. ``mask_add`` broadcasts to (B, H, Tq, Tk)."""
    scale = 1.0 / np.sqrt(wq.shape[1] // n_heads)
    q = _split_heads(_linear_fwd(xq, wq), n_heads)
    k = _split_heads(_linear_fwd(xkv, wk), n_heads)
    v = _split_heads(_linear_fwd(xkv, wv), n_heads)
    scores = (q @ k.transpose(0, 1, 3, 2)) * scale
    if mask_add is not None:
        scores = scores + mask_add
    a = softmax(scores, axis=-1)
    ctx = _merge_heads(a @ v)
    y = _linear_fwd(ctx, wo)
    cache = (xq, xkv, wq, wk, wv, wo, q, k, v, a, ctx, n_heads, scale)
    return y, cache


def attention_bwd(dy, cache):
    (xq, xkv, wq, wk, wv, wo, q, k, v, a, ctx, n_heads, scale) = cache
    dctx, dwo = _linear_bwd(ctx, wo, dy)
    dctx = _split_heads(dctx, n_heads)
    da = dctx @ v.transpose(0, 1, 3, 2)
    dv = a.transpose(0, 1, 3, 2) @ dctx
    ds = a * (da - np.sum(da * a, axis=-1, keepdims=True))
    ds = ds * scale
    dq = ds @ k
    dk = ds.transpose(0, 1, 3, 2) @ q
    dxq, dwq = _linear_bwd(xq, wq, _merge_heads(dq))
    dxk, dwk = _linear_bwd(xkv, wk, _merge_heads(dk))
    dxv, dwv = _linear_bwd(xkv, wv, _merge_heads(dv))
    return dxq, dxk + dxv, dwq, dwk, dwv, dwo


def ffn_fwd(x, w1, b1, w2, b2):
    h = _linear_fwd(x, w1) + b1
    a, gcache = gelu_fwd(h)
    y = _linear_fwd(a, w2) + b2
    return y, (x, w1, a, w2, gcache)


def ffn_bwd(dy, cache):
    x, w1, a, w2, gcache = cache
    db2 = dy.reshape(-1, dy.shape[-1]).sum(axis=0)
    da, dw2 = _linear_bwd(a, w2, dy)
    dh = gelu_bwd(da, gcache)
    db1 = dh.reshape(-1, dh.shape[-1]).sum(axis=0)
    dx, dw1 = _linear_bwd(x, w1, dh)
    return dx, dw1, db1, dw2, db2


def key_padding_mask(mask):
    """(B, Tk) 0/1 validity -> additive (B, 1, 1, Tk) mask."""
    return ((1.0 - mask) * NEG_INF)[:, None, None, :]


def causal_mask(t):
    """Additive (1, 1, t, t) mask hiding strictly-future positions."""
    m = np.triu(np.full((t, t), NEG_INF), k=1)
    return m[None, None, :, :]
