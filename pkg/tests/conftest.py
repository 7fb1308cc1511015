import numpy as np
import pytest

from eipkit.generative import TrainConfig, train
from eipkit.rng import child_rng
from eipkit.synthetic import (
    ForwardSpec,
    PriorSpec,
    make_pair_dataset,
    make_training_corpus,
)

TINY_SEED = 4242


@pytest.fixture(scope="session")
def forward():
    return ForwardSpec()


@pytest.fixture(scope="session")
def tiny_corpus(forward):
    """Four-prior corpus, 160 pairs each: big enough to train on."""
    priors = [PriorSpec(gamma=g) for g in (-0.7, -0.3, 0.3, 0.7)]
    return make_training_corpus(priors, forward, 160, TINY_SEED)


@pytest.fixture(scope="session")
def tiny_bundle(tiny_corpus):
    """A briefly trained set-conditioned flow-matching model."""
    cfg = TrainConfig(kind="fm", conditioning="learned", encoder="deepset",
                      k=3, n_subset=160, steps=150, batch=64, seed=TINY_SEED)
    return train(tiny_corpus, cfg)


@pytest.fixture()
def pair_batch(forward):
    rng = child_rng(TINY_SEED, "pair-batch")
    ds = make_pair_dataset(PriorSpec(gamma=0.5), forward, 48, rng)
    return ds
