"""Parameter trees: insertion-ordered dicts of float64 arrays."""

from __future__ import annotations

import numpy as np


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights."""
    bound = 1.0 / np.sqrt(max(1, fan_in))
    return rng.uniform(-bound, bound, size=shape)


def zeros_like_tree(tree: dict) -> dict:
    return {name: np.zeros_like(arr) for name, arr in tree.items()}


def tree_map(fn, *trees: dict) -> dict:
    """Apply ``fn`` leafwise across trees sharing one key layout."""
    first = trees[0]
    for other in trees[1:]:
        if other.keys() != first.keys():
            raise ValueError("parameter trees have mismatched keys")
    return {name: fn(*(t[name] for t in trees)) for name in first}


def tree_all_finite(tree: dict) -> bool:
    return all(np.all(np.isfinite(arr)) for arr in tree.values())


def tree_count(tree: dict) -> int:
    return sum(int(np.asarray(arr).size) for arr in tree.values())
