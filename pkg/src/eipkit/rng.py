"""Deterministic random-stream derivation.

Every stochastic component derives its own generator from a global seed
plus a stable label path, so independent stages (dataset generation,
weight init, per-observation sampling) can run in any order or in
parallel without changing results.  Labels are hashed with SHA-256, not
Python's ``hash``, so streams are reproducible across processes.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_words(label) -> list[int]:
    if isinstance(label, (int, np.integer)):
        return [int(label) & 0xFFFFFFFF, (int(label) >> 32) & 0xFFFFFFFF]
    if isinstance(label, float):
        label = repr(label)
    if isinstance(label, str):
        digest = hashlib.sha256(label.encode("utf-8")).digest()
        return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    raise TypeError(f"unsupported rng label type: {type(label)!r}")


def seed_sequence(seed: int, *labels) -> np.random.SeedSequence:
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for lab in labels:
        entropy.extend(_label_words(lab))
    return np.random.SeedSequence(entropy)


def child_rng(seed: int, *labels) -> np.random.Generator:
    """Generator for the stream identified by (seed, *labels)."""
    return np.random.default_rng(seed_sequence(seed, *labels))


def derive_seed(seed: int, *labels) -> int:
    """A derived integer seed, for components that re-derive their own
    children (e.g. per-round recovery seeds)."""
    return int(seed_sequence(seed, *labels).generate_state(1, dtype=np.uint64)[0])
