"""Permutation-invariant set encoders.

Three variants behind one interface:

* ``deepset``: per-element MLP, mean pool, post-pool MLP.
* ``settransformer``: induced set attention (ISAB) followed by pooling
  by multihead attention (PMA), one self-attention block, and a linear
  head.  Attention blocks use the residual form Q + multihead(Q, K, V)
  with a residual feed-forward, no layer norm.
* ``moments``: no weights; raw per-coordinate means plus central
  moments up to order p, laid out means first, then order 2, etc.

``encoder_forward`` maps a set of d-vectors to a k-vector and is
invariant to row order up to floating-point reassociation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from .epsnet import silu, silu_grad
from .params import uniform_init

DEEPSET = "deepset"
SETTRANSFORMER = "settransformer"
MOMENTS = "moments"

VARIANTS = (DEEPSET, SETTRANSFORMER, MOMENTS)


@dataclass
class Encoder:
    variant: str
    d: int
    k: int
    width: int = 128
    heads: int = 4
    inducing: int = 16
    p: int = 3
    params: dict = field(default_factory=dict)

    @property
    def trainable(self) -> bool:
        return self.variant in (DEEPSET, SETTRANSFORMER)


def init_encoder(variant: str, d: int, k: int, rng: np.random.Generator,
                 width: int = 128, heads: int = 4, inducing: int = 16,
                 p: int = 3) -> Encoder:
    if variant not in VARIANTS:
        raise ConfigError(f"unknown encoder variant: {variant!r}")
    if variant == MOMENTS:
        if k not in (0, d * p):
            raise ConfigError(f"moments encoder with order {p} yields k={d * p}")
        return Encoder(variant=MOMENTS, d=d, k=d * p, p=p)
    if k < 1:
        raise ConfigError("encoder output width k must be >= 1")

    if variant == DEEPSET:
        params = {
            "phi_w1": uniform_init(rng, (width, d), d),
            "phi_b1": np.zeros(width),
            "phi_w2": uniform_init(rng, (width, width), width),
            "phi_b2": np.zeros(width),
            "rho_w1": uniform_init(rng, (width, width), width),
            "rho_b1": np.zeros(width),
            "rho_w2": uniform_init(rng, (k, width), width),
            "rho_b2": np.zeros(k),
        }
        return Encoder(variant=DEEPSET, d=d, k=k, width=width, params=params)

    if width % heads != 0:
        raise ConfigError(f"head count {heads} must divide width {width}")
    params = {"isab_i": uniform_init(rng, (inducing, width), width)}
    params.update(_mab_init("isab0", width, d, width, rng))
    params.update(_mab_init("isab1", d, width, width, rng))
    params["pma_s"] = uniform_init(rng, (1, width), width)
    params.update(_mab_init("pma", width, width, width, rng))
    params.update(_mab_init("sab", width, width, width, rng))
    params["out_w"] = uniform_init(rng, (k, width), width)
    params["out_b"] = np.zeros(k)
    return Encoder(variant=SETTRANSFORMER, d=d, k=k, width=width,
                   heads=heads, inducing=inducing, params=params)


def encoder_forward(enc: Encoder, y_set: np.ndarray) -> np.ndarray:
    z, _ = encoder_forward_cached(enc, y_set)
    return z


def encoder_forward_cached(enc: Encoder, y_set: np.ndarray):
    y_set = np.asarray(y_set, dtype=float)
    if y_set.ndim != 2 or y_set.shape[0] < 1:
        raise ValueError("encoder input must be a non-empty (n, d) array")
    if y_set.shape[1] != enc.d:
        raise ValueError(
            f"encoder expects width {enc.d}, got {y_set.shape[1]}"
        )
    if enc.variant == DEEPSET:
        return _deepset_forward(enc, y_set)
    if enc.variant == SETTRANSFORMER:
        return _settransformer_forward(enc, y_set)
    return _moments_forward(enc, y_set), None


def encoder_backward(enc: Encoder, cache, dz: np.ndarray) -> dict:
    """Gradients w.r.t. encoder weights given the pooled-output gradient."""
    if enc.variant == DEEPSET:
        return _deepset_backward(enc, cache, dz)
    if enc.variant == SETTRANSFORMER:
        return _settransformer_backward(enc, cache, dz)
    return {}


def _moments_forward(enc: Encoder, y_set: np.ndarray) -> np.ndarray:
    mean = y_set.mean(axis=0)
    blocks = [mean]
    centered = y_set - mean
    for order in range(2, enc.p + 1):
        blocks.append((centered ** order).mean(axis=0))
    return np.concatenate(blocks)


def _deepset_forward(enc: Encoder, y_set: np.ndarray):
    p = enc.params
    e1pre = y_set @ p["phi_w1"].T + p["phi_b1"]
    e1 = silu(e1pre)
    e2pre = e1 @ p["phi_w2"].T + p["phi_b2"]
    e2 = silu(e2pre)
    pooled = e2.mean(axis=0)
    r1pre = p["rho_w1"] @ pooled + p["rho_b1"]
    r1 = silu(r1pre)
    z = p["rho_w2"] @ r1 + p["rho_b2"]
    cache = (y_set, e1pre, e1, e2pre, pooled, r1pre, r1)
    return z, cache


def _deepset_backward(enc: Encoder, cache, dz: np.ndarray) -> dict:
    p = enc.params
    y_set, e1pre, e1, e2pre, pooled, r1pre, r1 = cache
    n = y_set.shape[0]

    drho_w2 = np.outer(dz, r1)
    drho_b2 = dz
    dr1pre = (p["rho_w2"].T @ dz) * silu_grad(r1pre)
    drho_w1 = np.outer(dr1pre, pooled)
    drho_b1 = dr1pre

    dpooled = p["rho_w1"].T @ dr1pre
    de2pre = (dpooled / n) * silu_grad(e2pre)
    dphi_w2 = de2pre.T @ e1
    dphi_b2 = de2pre.sum(axis=0)
    de1pre = (de2pre @ p["phi_w2"]) * silu_grad(e1pre)
    dphi_w1 = de1pre.T @ y_set
    dphi_b1 = de1pre.sum(axis=0)

    return {
        "phi_w1": dphi_w1, "phi_b1": dphi_b1,
        "phi_w2": dphi_w2, "phi_b2": dphi_b2,
        "rho_w1": drho_w1, "rho_b1": drho_b1,
        "rho_w2": drho_w2, "rho_b2": drho_b2,
    }


def _mab_init(prefix: str, dq: int, dk: int, width: int,
              rng: np.random.Generator) -> dict:
    return {
        f"{prefix}_wq": uniform_init(rng, (width, dq), dq),
        f"{prefix}_bq": np.zeros(width),
        f"{prefix}_wk": uniform_init(rng, (width, dk), dk),
        f"{prefix}_bk": np.zeros(width),
        f"{prefix}_wv": uniform_init(rng, (width, dk), dk),
        f"{prefix}_bv": np.zeros(width),
        f"{prefix}_wo": uniform_init(rng, (width, width), width),
        f"{prefix}_bo": np.zeros(width),
    }


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    n, width = x.shape
    return x.reshape(n, heads, width // heads).transpose(1, 0, 2)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    heads, n, dh = x.shape
    return x.transpose(1, 0, 2).reshape(n, heads * dh)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _mab_forward(params: dict, prefix: str, q_in: np.ndarray,
                 k_in: np.ndarray, heads: int):
    """Multihead attention block: Q + attend(Q, K, V), then residual FF."""
    wq, bq = params[f"{prefix}_wq"], params[f"{prefix}_bq"]
    wk, bk = params[f"{prefix}_wk"], params[f"{prefix}_bk"]
    wv, bv = params[f"{prefix}_wv"], params[f"{prefix}_bv"]
    wo, bo = params[f"{prefix}_wo"], params[f"{prefix}_bo"]

    q = q_in @ wq.T + bq
    k = k_in @ wk.T + bk
    v = k_in @ wv.T + bv
    width = q.shape[1]
    qh = _split_heads(q, heads)
    kh = _split_heads(k, heads)
    vh = _split_heads(v, heads)
    logits = qh @ kh.transpose(0, 2, 1) / np.sqrt(width)
    attn = _softmax(logits)
    att = _merge_heads(attn @ vh)
    o1 = q + att
    ff = o1 @ wo.T + bo
    out = o1 + silu(ff)
    cache = (q_in, k_in, qh, kh, vh, attn, o1, ff)
    return out, cache


def _mab_backward(params: dict, prefix: str, heads: int, cache,
                  dout: np.ndarray):
    """Returns (grads for this block, dQ_in, dK_in)."""
    wq = params[f"{prefix}_wq"]
    wk = params[f"{prefix}_wk"]
    wv = params[f"{prefix}_wv"]
    wo = params[f"{prefix}_wo"]
    q_in, k_in, qh, kh, vh, attn, o1, ff = cache
    width = wq.shape[0]

    dff = dout * silu_grad(ff)
    dwo = dff.T @ o1
    dbo = dff.sum(axis=0)
    do1 = dout + dff @ wo

    datt_h = _split_heads(do1, heads)
    dattn = datt_h @ vh.transpose(0, 2, 1)
    dvh = attn.transpose(0, 2, 1) @ datt_h
    dlogits = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
    dlogits /= np.sqrt(width)
    dqh = dlogits @ kh
    dkh = dlogits.transpose(0, 2, 1) @ qh

    dq = do1 + _merge_heads(dqh)
    dk = _merge_heads(dkh)
    dv = _merge_heads(dvh)

    grads = {
        f"{prefix}_wq": dq.T @ q_in, f"{prefix}_bq": dq.sum(axis=0),
        f"{prefix}_wk": dk.T @ k_in, f"{prefix}_bk": dk.sum(axis=0),
        f"{prefix}_wv": dv.T @ k_in, f"{prefix}_bv": dv.sum(axis=0),
        f"{prefix}_wo": dwo, f"{prefix}_bo": dbo,
    }
    dq_in = dq @ wq
    dk_in = dk @ wk + dv @ wv
    return grads, dq_in, dk_in


def _settransformer_forward(enc: Encoder, y_set: np.ndarray):
    p = enc.params
    h, cache0 = _mab_forward(p, "isab0", p["isab_i"], y_set, enc.heads)
    xe, cache1 = _mab_forward(p, "isab1", y_set, h, enc.heads)
    pooled, cache2 = _mab_forward(p, "pma", p["pma_s"], xe, enc.heads)
    refined, cache3 = _mab_forward(p, "sab", pooled, pooled, enc.heads)
    z = p["out_w"] @ refined[0] + p["out_b"]
    cache = (y_set, cache0, cache1, cache2, cache3, refined)
    return z, cache


def _settransformer_backward(enc: Encoder, cache, dz: np.ndarray) -> dict:
    p = enc.params
    y_set, cache0, cache1, cache2, cache3, refined = cache

    grads = {
        "out_w": np.outer(dz, refined[0]),
        "out_b": dz,
    }
    drefined = (p["out_w"].T @ dz)[None, :]
    g3, dpq, dpk = _mab_backward(p, "sab", enc.heads, cache3, drefined)
    grads.update(g3)
    dpooled = dpq + dpk
    g2, dseed, dxe = _mab_backward(p, "pma", enc.heads, cache2, dpooled)
    grads.update(g2)
    grads["pma_s"] = dseed
    g1, dy_a, dh = _mab_backward(p, "isab1", enc.heads, cache1, dxe)
    grads.update(g1)
    g0, di, dy_b = _mab_backward(p, "isab0", enc.heads, cache0, dh)
    grads.update(g0)
    grads["isab_i"] = di
    ordered = {name: grads[name] for name in enc.params}
    return ordered
