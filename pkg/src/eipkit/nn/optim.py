"""SGD and Adam over parameter trees.

``optimizer_step`` is pure: it returns fresh parameter arrays and a
fresh state, leaving its inputs untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ConfigError, NumericFailure
from .params import tree_all_finite, tree_map, zeros_like_tree

SGD = "sgd"
ADAM = "adam"


@dataclass
class OptimizerState:
    algorithm: str
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def init_optimizer(algorithm: str, lr: float, params: dict) -> OptimizerState:
    if algorithm not in (SGD, ADAM):
        raise ConfigError(f"unknown optimizer: {algorithm!r}")
    if not lr > 0:
        raise ConfigError("learning rate must be positive")
    state = OptimizerState(algorithm=algorithm, lr=lr)
    if algorithm == ADAM:
        state.m = zeros_like_tree(params)
        state.v = zeros_like_tree(params)
    return state


def optimizer_step(state: OptimizerState, params: dict, grads: dict):
    """One update; returns (new params, new state)."""
    if params.keys() != grads.keys():
        raise ValueError("gradient tree does not match parameter tree")
    if not tree_all_finite(grads):
        raise NumericFailure(
            f"non-finite gradient at optimizer step {state.step + 1}",
            step=state.step + 1,
        )

    if state.algorithm == SGD:
        new_params = tree_map(lambda p, g: p - state.lr * g, params, grads)
        return new_params, replace(state, step=state.step + 1)

    step = state.step + 1
    m = tree_map(lambda m_, g: state.beta1 * m_ + (1 - state.beta1) * g,
                 state.m, grads)
    v = tree_map(lambda v_, g: state.beta2 * v_ + (1 - state.beta2) * g * g,
                 state.v, grads)
    bc1 = 1 - state.beta1 ** step
    bc2 = 1 - state.beta2 ** step
    new_params = tree_map(
        lambda p, m_, v_: p - state.lr * (m_ / bc1) / (np.sqrt(v_ / bc2) + state.eps),
        params, m, v,
    )
    return new_params, replace(state, step=step, m=m, v=v)
