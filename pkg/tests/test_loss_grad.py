"""Finite-difference checks through the full training loss."""

import numpy as np
import pytest

from eipkit.errors import NumericFailure
from eipkit.generative import TrainConfig, _init_bundle
from eipkit.nn import TrainingBatch, loss_and_grad, tree_count
from eipkit.rng import child_rng
from eipkit.synthetic import ForwardSpec, PriorSpec, make_training_corpus


def _small_bundle(conditioning, encoder="deepset", k=2, kind="fm"):
    priors = [PriorSpec(gamma=0.4), PriorSpec(gamma=-0.4)]
    corpus = make_training_corpus(priors, ForwardSpec(), 16, 77)
    cfg = TrainConfig(kind=kind, conditioning=conditioning, encoder=encoder,
                      k=k, hidden=6, width=6, heads=2, inducing=3,
                      n_subset=16, seed=31)
    return _init_bundle(cfg, corpus)


def _batch(bundle, rng, n=5, n_set=9):
    d = bundle.d
    x_t = rng.standard_normal((n, d))
    y = rng.standard_normal((n, d))
    t = rng.uniform(size=n)
    target = rng.standard_normal((n, d))
    if bundle.conditioning == "learned":
        return TrainingBatch(x_t=x_t, t=t, y=y, target=target,
                             y_set=rng.standard_normal((n_set, d)))
    z = rng.standard_normal(bundle.k) if bundle.k else np.zeros(0)
    return TrainingBatch(x_t=x_t, t=t, y=y, target=target, z=z)


def _loss_only(bundle, batch):
    value, _, _ = loss_and_grad(bundle, batch)
    return value


@pytest.mark.parametrize("conditioning,encoder", [
    ("none", "deepset"),
    ("oracle", "deepset"),
    ("learned", "deepset"),
    ("learned", "settransformer"),
])
def test_joint_gradient_matches_finite_differences(conditioning, encoder):
    bundle = _small_bundle(conditioning,
                           encoder=encoder,
                           k=0 if conditioning == "none" else 2)
    rng = child_rng(8, "loss-grad", conditioning, encoder)
    batch = _batch(bundle, rng)

    _, eps_grads, enc_grads = loss_and_grad(bundle, batch)

    trees = [(bundle.eps, eps_grads)]
    if bundle.conditioning == "learned":
        trees.append((bundle.encoder.params, enc_grads))

    h = 1e-5
    worst = 0.0
    for params, grads in trees:
        for key in params:
            it = np.nditer(params[key], flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = params[key][idx]
                params[key][idx] = orig + h
                up = _loss_only(bundle, batch)
                params[key][idx] = orig - h
                dn = _loss_only(bundle, batch)
                params[key][idx] = orig
                fd = (up - dn) / (2 * h)
                got = grads[key][idx]
                worst = max(worst, abs(fd - got) / max(abs(fd), abs(got), 1e-6))
    assert worst < 1e-4


def test_model_under_500_params_for_grad_check():
    bundle = _small_bundle("learned")
    total = tree_count(bundle.eps) + tree_count(bundle.encoder.params)
    assert total <= 500


def test_loss_is_sum_of_squares():
    bundle = _small_bundle("none", k=0)
    rng = child_rng(9, "loss-val")
    batch = _batch(bundle, rng)
    from eipkit.nn import eps_forward_batch
    value, _, _ = loss_and_grad(bundle, batch)
    z = np.zeros((batch.x_t.shape[0], 0))
    pred = eps_forward_batch(bundle.eps, batch.x_t, batch.t, batch.y, z)
    assert np.isclose(value, np.sum((pred - batch.target) ** 2))


def test_nonfinite_batch_reports_row():
    bundle = _small_bundle("none", k=0)
    rng = child_rng(10, "loss-nan")
    batch = _batch(bundle, rng)
    batch.x_t[3, 0] = np.nan
    with pytest.raises(NumericFailure) as err:
        loss_and_grad(bundle, batch)
    assert err.value.batch_index == 3


def test_batch_requires_exactly_one_conditioning_source():
    bundle = _small_bundle("learned")
    rng = child_rng(11, "loss-both")
    with pytest.raises(ValueError):
        TrainingBatch(x_t=rng.standard_normal((2, 2)),
                      t=rng.uniform(size=2),
                      y=rng.standard_normal((2, 2)),
                      target=rng.standard_normal((2, 2)),
                      z=np.zeros(2),
                      y_set=rng.standard_normal((4, 2)))
