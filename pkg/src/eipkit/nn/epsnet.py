"""The denoiser/velocity network.

Architecture: ``u = concat(x_t, y, z)`` feeds a linear layer; a learned
embedding of the scalar time is added before the first activation; two
hidden layers follow; the first hidden activation is added back onto
the last hidden output (skip) before the output layer.

    pre = W_in u + b_in + w_t * t + b_t
    a1  = silu(pre)
    h1  = silu(W1 a1 + b1)
    h2  = silu(W2 h1 + b2)
    out = W_out (h2 + a1) + b_out

All functions are pure.  Time is the caller's normalized scalar in
[0, 1] (diffusion step index divided by the step count, or the flow
time itself).
"""

from __future__ import annotations

import numpy as np

from .params import uniform_init

HIDDEN = 64


def sigmoid(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def silu(v: np.ndarray) -> np.ndarray:
    return v * sigmoid(v)


def silu_grad(v: np.ndarray) -> np.ndarray:
    s = sigmoid(v)
    return s * (1.0 + v * (1.0 - s))


def init_eps_params(d: int, k: int, rng: np.random.Generator,
                    hidden: int = HIDDEN) -> dict:
    """Seeded uniform init (scale 1/sqrt(fan_in)), zero biases."""
    din = 2 * d + k
    return {
        "w_in": uniform_init(rng, (hidden, din), din),
        "b_in": np.zeros(hidden),
        "w_t": uniform_init(rng, (hidden,), 1),
        "b_t": np.zeros(hidden),
        "w1": uniform_init(rng, (hidden, hidden), hidden),
        "b1": np.zeros(hidden),
        "w2": uniform_init(rng, (hidden, hidden), hidden),
        "b2": np.zeros(hidden),
        "w_out": uniform_init(rng, (d, hidden), hidden),
        "b_out": np.zeros(d),
    }


def eps_widths(params: dict):
    """(d, k, hidden) implied by the parameter shapes."""
    hidden, din = params["w_in"].shape
    d = params["w_out"].shape[0]
    return d, din - 2 * d, hidden


def eps_forward_cached(params: dict, x_t: np.ndarray, t: np.ndarray,
                       y: np.ndarray, z: np.ndarray):
    """Batched forward pass; returns (out, cache) for the backward pass.

    x_t, y: (B, d); t: (B,); z: (B, k) with k possibly 0.
    """
    u = np.concatenate([x_t, y, z], axis=1)
    if u.shape[1] != params["w_in"].shape[1]:
        raise ValueError(
            f"input width {u.shape[1]} does not match "
            f"network width {params['w_in'].shape[1]}"
        )
    t = np.asarray(t, dtype=float)
    pre = (u @ params["w_in"].T + params["b_in"]
           + t[:, None] * params["w_t"] + params["b_t"])
    a1 = silu(pre)
    h1pre = a1 @ params["w1"].T + params["b1"]
    h1 = silu(h1pre)
    h2pre = h1 @ params["w2"].T + params["b2"]
    h2 = silu(h2pre)
    s = h2 + a1
    out = s @ params["w_out"].T + params["b_out"]
    cache = (u, t, pre, a1, h1pre, h1, h2pre, s)
    return out, cache


def eps_forward_batch(params: dict, x_t: np.ndarray, t: np.ndarray,
                      y: np.ndarray, z: np.ndarray) -> np.ndarray:
    out, _ = eps_forward_cached(params, x_t, t, y, z)
    return out


def eps_forward(params: dict, x_t: np.ndarray, t: float, y: np.ndarray,
                z: np.ndarray) -> np.ndarray:
    """Single-example forward: vectors in, vector out."""
    out, _ = eps_forward_cached(
        params,
        np.asarray(x_t, dtype=float)[None, :],
        np.array([t], dtype=float),
        np.asarray(y, dtype=float)[None, :],
        np.asarray(z, dtype=float)[None, :],
    )
    return out[0]


def eps_backward(params: dict, cache, dout: np.ndarray):
    """Reverse pass: (grads tree, du) where du is (B, 2d+k).

    du rows are the loss gradient w.r.t. the concatenated input, so the
    trailing k columns give the gradient flowing into the condition z.
    """
    u, t, pre, a1, h1pre, h1, h2pre, s = cache

    dw_out = dout.T @ s
    db_out = dout.sum(axis=0)
    ds = dout @ params["w_out"]

    dh2pre = ds * silu_grad(h2pre)
    dw2 = dh2pre.T @ h1
    db2 = dh2pre.sum(axis=0)

    dh1pre = (dh2pre @ params["w2"]) * silu_grad(h1pre)
    dw1 = dh1pre.T @ a1
    db1 = dh1pre.sum(axis=0)

    da1 = dh1pre @ params["w1"] + ds
    dpre = da1 * silu_grad(pre)
    dw_in = dpre.T @ u
    db_in = dpre.sum(axis=0)
    dw_t = (dpre * t[:, None]).sum(axis=0)
    db_t = dpre.sum(axis=0)
    du = dpre @ params["w_in"]

    grads = {
        "w_in": dw_in, "b_in": db_in,
        "w_t": dw_t, "b_t": db_t,
        "w1": dw1, "b1": db1,
        "w2": dw2, "b2": db2,
        "w_out": dw_out, "b_out": db_out,
    }
    return grads, du
