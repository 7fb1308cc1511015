"""Squared-error training loss with exact reverse-mode gradients.

The loss over a batch is the sum of per-pair squared errors
``sum_i ||net(x_t_i, t_i, y_i, z) - target_i||^2``.  When the batch
carries an observation set instead of a fixed condition vector, the
set is encoded once and gradients flow through the encoder weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericFailure
from .bundle import COND_LEARNED, ModelBundle
from .encoders import encoder_backward, encoder_forward_cached
from .epsnet import eps_backward, eps_forward_cached
from .params import zeros_like_tree


@dataclass
class TrainingBatch:
    """Aligned arrays for one optimizer step.

    x_t, y, target: (B, d); t: (B,) normalized times.  Exactly one of
    ``z`` (fixed condition, shape (k,), possibly k=0) or ``y_set``
    (observation set routed through the trainable encoder) is set.
    """

    x_t: np.ndarray
    t: np.ndarray
    y: np.ndarray
    target: np.ndarray
    z: np.ndarray = None
    y_set: np.ndarray = None

    def __post_init__(self):
        if (self.z is None) == (self.y_set is None):
            raise ValueError("provide exactly one of z or y_set")
        if self.x_t.shape[0] < 1:
            raise ValueError("batch must be non-empty")


def loss_and_grad(bundle: ModelBundle, batch: TrainingBatch):
    """Returns (loss, eps gradients, encoder gradients).

    Encoder gradients are an empty tree unless the batch routes a set
    through a trainable encoder.
    """
    b = batch.x_t.shape[0]

    enc_cache = None
    if batch.y_set is not None:
        if bundle.conditioning != COND_LEARNED:
            raise ValueError(
                "observation sets are only consumed in learned conditioning"
            )
        z, enc_cache = encoder_forward_cached(bundle.encoder, batch.y_set)
    else:
        z = np.asarray(batch.z, dtype=float)
    z_rows = np.broadcast_to(z, (b, z.shape[0]))

    out, cache = eps_forward_cached(bundle.eps, batch.x_t, batch.t,
                                    batch.y, z_rows)
    resid = out - batch.target
    loss = float(np.sum(resid * resid))
    if not np.isfinite(loss):
        bad = np.where(~np.isfinite(resid).all(axis=1))[0]
        index = int(bad[0]) if bad.size else 0
        raise NumericFailure(
            f"non-finite loss at batch element {index}", batch_index=index
        )

    eps_grads, du = eps_backward(bundle.eps, cache, 2.0 * resid)

    if enc_cache is not None:
        dz = du[:, 2 * bundle.d:].sum(axis=0)
        enc_grads = encoder_backward(bundle.encoder, enc_cache, dz)
    else:
        enc_grads = zeros_like_tree(
            bundle.encoder.params) if _trains_encoder(bundle) else {}
    return loss, eps_grads, enc_grads


def _trains_encoder(bundle: ModelBundle) -> bool:
    return (bundle.conditioning == COND_LEARNED
            and bundle.encoder is not None and bundle.encoder.trainable)
