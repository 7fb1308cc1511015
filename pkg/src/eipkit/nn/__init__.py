"""Hand-rolled differentiable substrate on numpy float64 arrays.

Parameter collections are insertion-ordered dicts of arrays; gradients
mirror the same key layout.  Forward passes are pure; backward passes
consume caches returned by the ``*_cached`` variants.
"""

from .params import (
    tree_all_finite,
    tree_count,
    tree_map,
    uniform_init,
    zeros_like_tree,
)
from .epsnet import (
    eps_backward,
    eps_forward,
    eps_forward_batch,
    eps_forward_cached,
    init_eps_params,
    silu,
    silu_grad,
)
from .encoders import (
    Encoder,
    encoder_backward,
    encoder_forward,
    encoder_forward_cached,
    init_encoder,
)
from .bundle import ModelBundle, Normalization, load_checkpoint, save_checkpoint
from .loss import TrainingBatch, loss_and_grad
from .optim import OptimizerState, init_optimizer, optimizer_step

__all__ = [
    "Encoder",
    "ModelBundle",
    "Normalization",
    "OptimizerState",
    "TrainingBatch",
    "encoder_backward",
    "encoder_forward",
    "encoder_forward_cached",
    "eps_backward",
    "eps_forward",
    "eps_forward_batch",
    "eps_forward_cached",
    "init_encoder",
    "init_eps_params",
    "init_optimizer",
    "load_checkpoint",
    "loss_and_grad",
    "optimizer_step",
    "save_checkpoint",
    "silu",
    "silu_grad",
    "tree_all_finite",
    "tree_count",
    "tree_map",
    "uniform_init",
    "zeros_like_tree",
]
