"""Trained-model container: network weights, encoder, normalization
statistics, and generative configuration, with checkpoint round-trip."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from ..datafiles import load_model_file, save_model_file
from ..errors import ConfigError, DataFormatError
from .encoders import Encoder, VARIANTS
from .epsnet import HIDDEN

KIND_DDPM = "ddpm"
KIND_FM = "fm"

COND_NONE = "none"
COND_ORACLE = "oracle"
COND_LEARNED = "learned"
COND_MOMENTS = "moments"

CONDITIONINGS = (COND_NONE, COND_ORACLE, COND_LEARNED, COND_MOMENTS)

_METHOD_LABELS = {
    (KIND_FM, COND_NONE): "cfm",
    (KIND_FM, COND_ORACLE): "cfm-gamma",
    (KIND_FM, COND_LEARNED): "ei-fm",
    (KIND_FM, COND_MOMENTS): "mfm",
    (KIND_DDPM, COND_NONE): "cddpm",
    (KIND_DDPM, COND_ORACLE): "cddpm-gamma",
    (KIND_DDPM, COND_LEARNED): "ei-ddpm",
    (KIND_DDPM, COND_MOMENTS): "mddpm",
}


@dataclass
class Normalization:
    """Per-coordinate standardization fitted on the training corpus."""

    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray

    @classmethod
    def from_corpus(cls, corpus) -> "Normalization":
        xs, ys = corpus.all_pairs()
        norm = cls(
            x_mean=xs.mean(axis=0), x_std=xs.std(axis=0),
            y_mean=ys.mean(axis=0), y_std=ys.std(axis=0),
        )
        if not (np.all(norm.x_std > 0) and np.all(norm.y_std > 0)):
            raise ConfigError("training corpus has a zero-variance coordinate")
        return norm

    def normalize_x(self, v: np.ndarray) -> np.ndarray:
        return (v - self.x_mean) / self.x_std

    def denormalize_x(self, v: np.ndarray) -> np.ndarray:
        return v * self.x_std + self.x_mean

    def normalize_y(self, v: np.ndarray) -> np.ndarray:
        return (v - self.y_mean) / self.y_std

    def denormalize_y(self, v: np.ndarray) -> np.ndarray:
        return v * self.y_std + self.y_mean


@dataclass
class ModelBundle:
    kind: str
    conditioning: str
    d: int
    k: int
    n_train: int
    eps: dict
    encoder: Encoder | None
    norm: Normalization
    hidden: int = HIDDEN
    t_steps: int = 100
    beta1: float = 1e-4
    beta_t: float = 0.02
    sigma_mode: str = "beta_tilde"
    dt: float = 0.01
    seed: int = 0
    corpus_seed: int = 0
    steps_trained: int = 0

    def __post_init__(self):
        if self.kind not in (KIND_DDPM, KIND_FM):
            raise ConfigError(f"unknown model kind: {self.kind!r}")
        if self.conditioning not in CONDITIONINGS:
            raise ConfigError(f"unknown conditioning: {self.conditioning!r}")
        if self.conditioning == COND_NONE and self.k != 0:
            raise ConfigError("unconditioned model must have k=0")
        if self.conditioning != COND_NONE and self.k < 1:
            raise ConfigError("conditioned model must have k>=1")

    @property
    def method(self) -> str:
        return _METHOD_LABELS[(self.kind, self.conditioning)]

    def n_parameters(self) -> int:
        total = sum(arr.size for arr in self.eps.values())
        if self.encoder is not None:
            total += sum(arr.size for arr in self.encoder.params.values())
        return total


def fingerprint(bundle: ModelBundle) -> str:
    """Short content hash over configuration and weights."""
    h = hashlib.sha256()
    h.update(repr(_bundle_meta(bundle)).encode())
    for name in sorted(bundle.eps):
        h.update(bundle.eps[name].tobytes())
    if bundle.encoder is not None:
        for name in sorted(bundle.encoder.params):
            h.update(bundle.encoder.params[name].tobytes())
    return h.hexdigest()[:12]


def _bundle_meta(bundle: ModelBundle) -> dict:
    meta = {
        "kind": bundle.kind,
        "conditioning": bundle.conditioning,
        "d": bundle.d,
        "k": bundle.k,
        "n_train": bundle.n_train,
        "hidden": bundle.hidden,
        "t_steps": bundle.t_steps,
        "beta1": bundle.beta1,
        "beta_t": bundle.beta_t,
        "sigma_mode": bundle.sigma_mode,
        "dt": bundle.dt,
        "seed": bundle.seed,
        "corpus_seed": bundle.corpus_seed,
        "steps_trained": bundle.steps_trained,
        "norm.x_mean": [float(v) for v in bundle.norm.x_mean],
        "norm.x_std": [float(v) for v in bundle.norm.x_std],
        "norm.y_mean": [float(v) for v in bundle.norm.y_mean],
        "norm.y_std": [float(v) for v in bundle.norm.y_std],
    }
    enc = bundle.encoder
    if enc is None:
        meta["encoder"] = "absent"
    else:
        meta["encoder"] = enc.variant
        meta["enc.width"] = enc.width
        meta["enc.heads"] = enc.heads
        meta["enc.inducing"] = enc.inducing
        meta["enc.p"] = enc.p
    return meta


def save_checkpoint(bundle: ModelBundle, path) -> None:
    params = {f"eps.{name}": arr for name, arr in bundle.eps.items()}
    if bundle.encoder is not None:
        for name, arr in bundle.encoder.params.items():
            params[f"enc.{name}"] = arr
    save_model_file(path, _bundle_meta(bundle), params)


def load_checkpoint(path) -> ModelBundle:
    meta, params = load_model_file(path)
    try:
        d = int(meta["d"])
        k = int(meta["k"])
        hidden = int(meta["hidden"])
        norm = Normalization(
            x_mean=np.asarray(meta["norm.x_mean"], dtype=float),
            x_std=np.asarray(meta["norm.x_std"], dtype=float),
            y_mean=np.asarray(meta["norm.y_mean"], dtype=float),
            y_std=np.asarray(meta["norm.y_std"], dtype=float),
        )
        encoder_variant = meta["encoder"]
    except KeyError as exc:
        raise DataFormatError(f"checkpoint missing field {exc}") from exc

    eps = {name[len("eps."):]: arr for name, arr in params.items()
           if name.startswith("eps.")}
    enc_params = {name[len("enc."):]: arr for name, arr in params.items()
                  if name.startswith("enc.")}

    expected_in = (hidden, 2 * d + k)
    if "w_in" not in eps or eps["w_in"].shape != expected_in:
        raise DataFormatError(
            f"checkpoint network shape {eps.get('w_in', np.zeros(0)).shape} "
            f"does not match descriptor {expected_in}"
        )
    if eps["w_out"].shape != (d, hidden):
        raise DataFormatError("checkpoint output layer does not match d")

    encoder = None
    if encoder_variant != "absent":
        if encoder_variant not in VARIANTS:
            raise DataFormatError(f"unknown encoder variant {encoder_variant!r}")
        encoder = Encoder(
            variant=encoder_variant, d=d, k=k,
            width=int(meta["enc.width"]), heads=int(meta["enc.heads"]),
            inducing=int(meta["enc.inducing"]), p=int(meta["enc.p"]),
            params=enc_params,
        )

    try:
        return ModelBundle(
            kind=meta["kind"], conditioning=meta["conditioning"],
            d=d, k=k, n_train=int(meta["n_train"]), eps=eps, encoder=encoder,
            norm=norm, hidden=hidden, t_steps=int(meta["t_steps"]),
            beta1=float(meta["beta1"]), beta_t=float(meta["beta_t"]),
            sigma_mode=meta["sigma_mode"], dt=float(meta["dt"]),
            seed=int(meta["seed"]), corpus_seed=int(meta["corpus_seed"]),
            steps_trained=int(meta["steps_trained"]),
        )
    except ConfigError as exc:
        raise DataFormatError(f"inconsistent checkpoint: {exc}") from exc
