"""Ensemble inverse generative modeling toolkit.

Recovers truth distributions and per-observation posteriors from
multi-prior truth/observation corpora that share one unknown forward
model.  A permutation-invariant encoder summarizes a whole observation
set; diffusion or flow-matching samplers conditioned on that summary
generalize to priors never seen in training.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataFormatError,
    EipError,
    NumericFailure,
    SamplerDivergence,
)
from .generative import (
    NoiseSchedule,
    RecoveredEnsemble,
    SampleRequest,
    TrainConfig,
    choose_strategy,
    condition_vector,
    ddpm_sample,
    ddpm_training_example,
    fm_sample,
    fm_training_example,
    make_linear_schedule,
    recover_ensemble,
    recover_samples,
    recover_samples_restricted,
    train,
)
from .metrics import (
    CoverageCurve,
    MetricRow,
    SwdConfig,
    TarpConfig,
    nprime_row,
    sliced_wasserstein,
    sweep_row,
    swd_sweep,
    tarp_coverage,
    tarp_deviation,
    wasserstein1_1d,
    write_metric_csv,
)
from .nn import ModelBundle, Normalization, load_checkpoint, save_checkpoint
from .synthetic import (
    Corpus,
    ForwardSpec,
    PairDataset,
    PriorSpec,
    make_pair_dataset,
    make_training_corpus,
)

__all__ = [
    "ConfigError",
    "Corpus",
    "CoverageCurve",
    "DataFormatError",
    "EipError",
    "ForwardSpec",
    "MetricRow",
    "ModelBundle",
    "NoiseSchedule",
    "Normalization",
    "NumericFailure",
    "PairDataset",
    "PriorSpec",
    "RecoveredEnsemble",
    "SampleRequest",
    "SamplerDivergence",
    "SwdConfig",
    "TarpConfig",
    "TrainConfig",
    "choose_strategy",
    "condition_vector",
    "ddpm_sample",
    "ddpm_training_example",
    "fm_sample",
    "fm_training_example",
    "load_checkpoint",
    "make_linear_schedule",
    "make_pair_dataset",
    "make_training_corpus",
    "recover_ensemble",
    "recover_samples",
    "recover_samples_restricted",
    "save_checkpoint",
    "sliced_wasserstein",
    "nprime_row",
    "sweep_row",
    "swd_sweep",
    "tarp_coverage",
    "tarp_deviation",
    "train",
    "wasserstein1_1d",
    "write_metric_csv",
]
