"""Diffusion and flow-matching core: noise schedules, the joint
training loop over multi-prior corpora, reverse-process samplers, and
ensemble-recovery strategies for observation sets of any size.

Training repeatedly picks one dataset uniformly, draws an N-pair
subset, forms the condition from the subset's observations (nothing, the
raw prior parameters, a learned set encoding, or fixed moments), and
takes one joint optimizer step on the denoiser and encoder weights.

Sampling runs per observation: the diffusion sampler iterates

    x_{t-1} = (x_t - (1-a_t)/sqrt(1-abar_t) * net(x_t, t, y, z)) / sqrt(a_t)
              + sigma_t * noise        (noise = 0 at the final step)

and the flow sampler Euler-integrates the learned velocity from t=0 to
t=1, querying the velocity at the pre-step state with the post-step
time, as the sampling algorithm is stated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericFailure, SamplerDivergence
from .nn.bundle import (
    COND_LEARNED,
    COND_MOMENTS,
    COND_NONE,
    COND_ORACLE,
    KIND_DDPM,
    KIND_FM,
    ModelBundle,
    Normalization,
    fingerprint,
)
from .nn.encoders import DEEPSET, MOMENTS, SETTRANSFORMER, encoder_forward, init_encoder
from .nn.epsnet import eps_forward_batch, init_eps_params
from .nn.loss import TrainingBatch, loss_and_grad
from .nn.optim import init_optimizer, optimizer_step
from .rng import child_rng, derive_seed
from .synthetic import Corpus

STRATEGY_EXACT = "exact"
STRATEGY_DUPLICATE = "duplicate"
STRATEGY_REPEATED = "repeated_subsets"
STRATEGIES = (STRATEGY_EXACT, STRATEGY_DUPLICATE, STRATEGY_REPEATED)


@dataclass(frozen=True)
class NoiseSchedule:
    """Forward-process constants, index t-1 for step t in 1..t_steps."""

    t_steps: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    sigma: np.ndarray


def make_linear_schedule(t_steps: int, beta_start: float, beta_end: float,
                         sigma_mode: str = "beta_tilde") -> NoiseSchedule:
    """Linearly spaced beta (inclusive endpoints) and derived arrays.

    sigma_mode "beta_tilde" uses the forward-posterior variance
    (1-abar_{t-1})/(1-abar_t) * beta_t with abar_0 = 1, making
    sigma_1 = 0; "beta" uses beta_t itself.
    """
    if t_steps < 1:
        raise ConfigError("schedule needs at least one step")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ConfigError(
            f"need 0 < beta_start <= beta_end < 1, got "
            f"({beta_start}, {beta_end})"
        )
    if sigma_mode not in ("beta_tilde", "beta"):
        raise ConfigError(f"unknown sigma mode: {sigma_mode!r}")
    beta = np.linspace(beta_start, beta_end, t_steps)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    if sigma_mode == "beta":
        sigma = np.sqrt(beta)
    else:
        alpha_bar_prev = np.concatenate([[1.0], alpha_bar[:-1]])
        sigma = np.sqrt((1.0 - alpha_bar_prev) / (1.0 - alpha_bar) * beta)
    return NoiseSchedule(t_steps=t_steps, beta=beta, alpha=alpha,
                         alpha_bar=alpha_bar, sigma=sigma)


def schedule_of(bundle: ModelBundle) -> NoiseSchedule:
    return make_linear_schedule(bundle.t_steps, bundle.beta1, bundle.beta_t,
                                bundle.sigma_mode)


def ddpm_training_example(x: np.ndarray, t: int, xi: np.ndarray,
                          sched: NoiseSchedule):
    """Noised input and its target: (sqrt(ab_t) x + sqrt(1-ab_t) xi, xi)."""
    if not 1 <= t <= sched.t_steps:
        raise ValueError(f"step {t} outside 1..{sched.t_steps}")
    ab = sched.alpha_bar[t - 1]
    return np.sqrt(ab) * x + np.sqrt(1.0 - ab) * xi, xi


def fm_training_example(x: np.ndarray, xi: np.ndarray, t: float):
    """Interpolant and velocity target: (t x + (1-t) xi, x - xi)."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"flow time {t} outside [0, 1]")
    return t * x + (1.0 - t) * xi, x - xi


@dataclass
class TrainConfig:
    kind: str = KIND_FM
    conditioning: str = COND_LEARNED
    encoder: str = DEEPSET
    k: int = 3
    n_subset: int = 4000
    steps: int = 50000
    batch: int = 256          # 0 = accumulate over the whole subset
    lr: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    t_steps: int = 100
    beta1: float = 1e-4
    beta_t: float = 0.02
    sigma_mode: str = "beta_tilde"
    dt: float = 0.01
    replace: bool = False     # subset drawing with replacement
    hidden: int = 64
    width: int = 128
    heads: int = 4
    inducing: int = 16
    moments_p: int = 3


def resolve_k(cfg: TrainConfig, corpus: Corpus) -> int:
    if cfg.conditioning == COND_NONE:
        return 0
    if cfg.conditioning == COND_ORACLE:
        return corpus.datasets[0].prior.param_vector().shape[0]
    if cfg.conditioning == COND_MOMENTS:
        return corpus.d * cfg.moments_p
    if cfg.k < 1:
        raise ConfigError("learned conditioning needs k >= 1")
    return cfg.k


def _init_bundle(cfg: TrainConfig, corpus: Corpus) -> ModelBundle:
    d = corpus.d
    k = resolve_k(cfg, corpus)
    norm = Normalization.from_corpus(corpus)
    rng = child_rng(cfg.seed, "init")
    eps = init_eps_params(d, k, rng, hidden=cfg.hidden)
    encoder = None
    if cfg.conditioning == COND_LEARNED:
        if cfg.encoder not in (DEEPSET, SETTRANSFORMER):
            raise ConfigError(
                f"learned conditioning takes encoder deepset or "
                f"settransformer, not {cfg.encoder!r}"
            )
        encoder = init_encoder(cfg.encoder, d, k, rng, width=cfg.width,
                               heads=cfg.heads, inducing=cfg.inducing)
    elif cfg.conditioning == COND_MOMENTS:
        encoder = init_encoder(MOMENTS, d, k, rng, p=cfg.moments_p)
    return ModelBundle(
        kind=cfg.kind, conditioning=cfg.conditioning, d=d, k=k,
        n_train=cfg.n_subset, eps=eps, encoder=encoder, norm=norm,
        hidden=cfg.hidden, t_steps=cfg.t_steps, beta1=cfg.beta1,
        beta_t=cfg.beta_t, sigma_mode=cfg.sigma_mode, dt=cfg.dt,
        seed=cfg.seed, corpus_seed=corpus.seed,
    )


def _merge_trees(bundle: ModelBundle, trainable_encoder: bool):
    merged = {f"eps.{name}": arr for name, arr in bundle.eps.items()}
    if trainable_encoder:
        for name, arr in bundle.encoder.params.items():
            merged[f"enc.{name}"] = arr
    return merged


def _unmerge_into(bundle: ModelBundle, merged: dict,
                  trainable_encoder: bool) -> None:
    bundle.eps = {name[4:]: arr for name, arr in merged.items()
                  if name.startswith("eps.")}
    if trainable_encoder:
        bundle.encoder.params = {name[4:]: arr for name, arr in merged.items()
                                 if name.startswith("enc.")}


def train(corpus: Corpus, cfg: TrainConfig, loss_log: list = None) -> ModelBundle:
    """Joint training of denoiser and encoder over the corpus.

    ``loss_log``, if given, receives one (step, per-pair loss) tuple per
    optimizer step.
    """
    if cfg.n_subset < 1:
        raise ConfigError("subset size must be >= 1")
    if cfg.steps < 0:
        raise ConfigError("step budget must be >= 0")
    if cfg.batch < 0 or (cfg.batch and cfg.batch > cfg.n_subset):
        raise ConfigError("minibatch size must lie in 1..n_subset (0 = full)")
    smallest = min(len(ds) for ds in corpus.datasets)
    if smallest < cfg.n_subset and not cfg.replace:
        raise ConfigError(
            f"subset size {cfg.n_subset} exceeds smallest dataset "
            f"({smallest}); enable drawing with replacement"
        )

    bundle = _init_bundle(cfg, corpus)
    sched = make_linear_schedule(cfg.t_steps, cfg.beta1, cfg.beta_t,
                                 cfg.sigma_mode) if cfg.kind == KIND_DDPM else None
    trains_encoder = (cfg.conditioning == COND_LEARNED)

    x_norm = [bundle.norm.normalize_x(ds.x) for ds in corpus.datasets]
    y_norm = [bundle.norm.normalize_y(ds.y) for ds in corpus.datasets]
    oracle = [ds.prior.param_vector() for ds in corpus.datasets]

    merged = _merge_trees(bundle, trains_encoder)
    opt = init_optimizer(cfg.optimizer, cfg.lr, merged)
    rng = child_rng(cfg.seed, "train")
    b = cfg.batch or cfg.n_subset

    for step in range(cfg.steps):
        m = int(rng.integers(len(corpus.datasets)))
        idx = rng.choice(len(corpus.datasets[m]), size=cfg.n_subset,
                         replace=cfg.replace)
        y_subset = y_norm[m][idx]

        z = None
        y_set = None
        if cfg.conditioning == COND_LEARNED:
            y_set = y_subset
        elif cfg.conditioning == COND_MOMENTS:
            z = encoder_forward(bundle.encoder, y_subset)
        elif cfg.conditioning == COND_ORACLE:
            z = oracle[m]
        else:
            z = np.zeros(0)

        rows = idx if b == cfg.n_subset else idx[
            rng.choice(cfg.n_subset, size=b, replace=False)]
        x_rows = x_norm[m][rows]
        y_rows = y_norm[m][rows]
        xi = rng.standard_normal((b, bundle.d))
        if cfg.kind == KIND_DDPM:
            t_int = rng.integers(1, cfg.t_steps + 1, size=b)
            ab = sched.alpha_bar[t_int - 1][:, None]
            x_t = np.sqrt(ab) * x_rows + np.sqrt(1.0 - ab) * xi
            target = xi
            t_in = t_int / cfg.t_steps
        else:
            t_in = rng.uniform(0.0, 1.0, size=b)
            x_t = t_in[:, None] * x_rows + (1.0 - t_in[:, None]) * xi
            target = x_rows - xi

        batch = TrainingBatch(x_t=x_t, t=t_in, y=y_rows, target=target,
                              z=z, y_set=y_set)
        try:
            loss, eps_grads, enc_grads = loss_and_grad(bundle, batch)
            grads = {f"eps.{name}": g for name, g in eps_grads.items()}
            if trains_encoder:
                for name, g in enc_grads.items():
                    grads[f"enc.{name}"] = g
            merged, opt = optimizer_step(opt, merged, grads)
        except NumericFailure as exc:
            exc.step = step
            raise
        _unmerge_into(bundle, merged, trains_encoder)
        if loss_log is not None:
            loss_log.append((step, loss / b))

    bundle.steps_trained = cfg.steps
    return bundle


def condition_vector(bundle: ModelBundle, y_set: np.ndarray = None,
                     oracle_z: np.ndarray = None) -> np.ndarray:
    """The z the samplers see, from a raw observation set or oracle
    prior parameters, depending on the bundle's conditioning mode."""
    if bundle.conditioning == COND_NONE:
        return np.zeros(0)
    if bundle.conditioning == COND_ORACLE:
        if oracle_z is None:
            raise ConfigError("oracle conditioning needs the prior parameters")
        z = np.asarray(oracle_z, dtype=float)
        if z.shape != (bundle.k,):
            raise ConfigError(
                f"oracle condition has shape {z.shape}, model expects "
                f"({bundle.k},)"
            )
        return z
    if y_set is None:
        raise ConfigError("set conditioning needs an observation set")
    return encoder_forward(bundle.encoder, bundle.norm.normalize_y(y_set))


def _check_finite(x: np.ndarray, step: int, label: str) -> None:
    if not np.all(np.isfinite(x)):
        raise SamplerDivergence(
            f"non-finite state at {label} step {step}", step=step
        )


def _ddpm_reverse(bundle: ModelBundle, y_n: np.ndarray, z: np.ndarray,
                  noise: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    n = y_n.shape[0]
    t_steps = sched.t_steps
    x = noise[:, 0, :].copy()
    z_rows = np.broadcast_to(z, (n, z.shape[0]))
    for t in range(t_steps, 0, -1):
        t_in = np.full(n, t / t_steps)
        eps = eps_forward_batch(bundle.eps, x, t_in, y_n, z_rows)
        a_t = sched.alpha[t - 1]
        ab_t = sched.alpha_bar[t - 1]
        x = (x - (1.0 - a_t) / np.sqrt(1.0 - ab_t) * eps) / np.sqrt(a_t)
        if t > 1:
            x = x + sched.sigma[t - 1] * noise[:, t_steps - t + 1, :]
        _check_finite(x, t, "reverse-diffusion")
    return x


def _fm_reverse(bundle: ModelBundle, y_n: np.ndarray, z: np.ndarray,
                init: np.ndarray, n_steps: int) -> np.ndarray:
    n = y_n.shape[0]
    x = init.copy()
    z_rows = np.broadcast_to(z, (n, z.shape[0]))
    dt = 1.0 / n_steps
    for i in range(1, n_steps + 1):
        t_in = np.full(n, i / n_steps)
        velocity = eps_forward_batch(bundle.eps, x, t_in, y_n, z_rows)
        x = x + velocity * dt
        _check_finite(x, i, "flow-integration")
    return x


def _fm_step_count(dt: float) -> int:
    if not 0.0 < dt <= 1.0:
        raise ConfigError(f"flow step size must lie in (0, 1], got {dt}")
    n_steps = round(1.0 / dt)
    if abs(n_steps * dt - 1.0) > 1e-9:
        raise ConfigError(f"1/dt must be an integer, got dt={dt}")
    return n_steps


def ddpm_sample(bundle: ModelBundle, y: np.ndarray, z: np.ndarray,
                rng: np.random.Generator) -> np.ndarray:
    """One reverse-diffusion draw for one observation (raw space)."""
    if bundle.kind != KIND_DDPM:
        raise ConfigError("bundle is not a diffusion model")
    sched = schedule_of(bundle)
    noise = rng.standard_normal((1, sched.t_steps, bundle.d))
    y_n = bundle.norm.normalize_y(np.asarray(y, dtype=float))[None, :]
    x = _ddpm_reverse(bundle, y_n, np.asarray(z, dtype=float), noise, sched)
    return bundle.norm.denormalize_x(x)[0]


def fm_sample(bundle: ModelBundle, y: np.ndarray, z: np.ndarray,
              rng: np.random.Generator, dt: float = None) -> np.ndarray:
    """One Euler-integrated flow draw for one observation (raw space)."""
    if bundle.kind != KIND_FM:
        raise ConfigError("bundle is not a flow model")
    n_steps = _fm_step_count(bundle.dt if dt is None else dt)
    init = rng.standard_normal((1, bundle.d))
    y_n = bundle.norm.normalize_y(np.asarray(y, dtype=float))[None, :]
    x = _fm_reverse(bundle, y_n, np.asarray(z, dtype=float), init, n_steps)
    return bundle.norm.denormalize_x(x)[0]


def sample_batch(bundle: ModelBundle, ys: np.ndarray, z: np.ndarray,
                 seed: int, indices: np.ndarray = None) -> np.ndarray:
    """Per-observation draws with independent streams.

    Observation j's noise comes from the (seed, "sample", indices[j])
    stream, so results do not depend on how observations are batched,
    up to floating-point reassociation inside batched matrix products
    (one-ulp scale).  A fixed batching is bitwise reproducible.
    """
    ys = np.asarray(ys, dtype=float)
    n = ys.shape[0]
    if indices is None:
        indices = np.arange(n)
    z = np.asarray(z, dtype=float)
    y_n = bundle.norm.normalize_y(ys)
    if bundle.kind == KIND_DDPM:
        sched = schedule_of(bundle)
        noise = np.empty((n, sched.t_steps, bundle.d))
        for row, j in enumerate(indices):
            noise[row] = child_rng(seed, "sample", int(j)).standard_normal(
                (sched.t_steps, bundle.d))
        x = _ddpm_reverse(bundle, y_n, z, noise, sched)
    else:
        n_steps = _fm_step_count(bundle.dt)
        init = np.empty((n, bundle.d))
        for row, j in enumerate(indices):
            init[row] = child_rng(seed, "sample", int(j)).standard_normal(
                bundle.d)
        x = _fm_reverse(bundle, y_n, z, init, n_steps)
    return bundle.norm.denormalize_x(x)


@dataclass
class SampleRequest:
    """Recovery request for one observation set (raw space)."""

    observations: np.ndarray
    strategy: str = STRATEGY_EXACT
    seed: int = 0
    oracle_z: np.ndarray = None

    def __post_init__(self):
        self.observations = np.ascontiguousarray(self.observations,
                                                 dtype=np.float64)
        if self.observations.ndim != 2 or self.observations.shape[0] < 1:
            raise ConfigError("observations must be a non-empty (n, d) array")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy: {self.strategy!r}")


@dataclass
class RecoveredEnsemble:
    """One recovered truth per input observation, in input order."""

    x_hat: np.ndarray
    model_id: str
    strategy: str
    seed: int
    encoder_passes: int = 0


def choose_strategy(n_available: int, n_train: int) -> str:
    if n_available == n_train:
        return STRATEGY_EXACT
    if n_available < n_train:
        return STRATEGY_DUPLICATE
    return STRATEGY_REPEATED


def recover_ensemble(bundle: ModelBundle, req: SampleRequest) -> RecoveredEnsemble:
    """Run the sampler once per observation.

    Exact: the set is encoded as-is (its size must equal the training
    size).  Duplicate: the set is padded to the training size by random
    duplication, for encoding only.  Repeated subsets: consecutive
    training-size passes, the last padded by resampling earlier
    members; every observation is sampled exactly once.
    """
    obs = req.observations
    n_prime, d = obs.shape
    if d != bundle.d:
        raise ConfigError(f"observations are {d}-dimensional, model wants "
                          f"{bundle.d}")
    n_train = bundle.n_train

    if req.strategy == STRATEGY_EXACT and n_prime != n_train:
        raise ConfigError(
            f"exact strategy needs exactly {n_train} observations, "
            f"got {n_prime}"
        )
    if req.strategy == STRATEGY_DUPLICATE and n_prime > n_train:
        raise ConfigError("duplication only applies to sets smaller than "
                          "the training size")
    if req.strategy == STRATEGY_REPEATED and n_prime < n_train:
        raise ConfigError("repeated subsets only apply to sets at least as "
                          "large as the training size")

    if req.strategy == STRATEGY_REPEATED:
        n_passes = math.ceil(n_prime / n_train)
        bounds = [(p * n_train, min((p + 1) * n_train, n_prime))
                  for p in range(n_passes)]
    else:
        bounds = [(0, n_prime)]

    uses_sets = bundle.conditioning in (COND_LEARNED, COND_MOMENTS)
    x_hat = np.empty_like(obs)
    encoder_passes = 0
    for pass_index, (lo, hi) in enumerate(bounds):
        members = obs[lo:hi]
        if uses_sets:
            pad_count = n_train - (hi - lo)
            if pad_count > 0:
                pad_rng = child_rng(req.seed, "pad", pass_index)
                pool = hi if req.strategy == STRATEGY_DUPLICATE else lo
                pad_rows = pad_rng.integers(0, pool, size=pad_count)
                enc_set = np.concatenate([members, obs[pad_rows]], axis=0)
            else:
                enc_set = members
            z = condition_vector(bundle, y_set=enc_set)
            encoder_passes += 1
        else:
            z = condition_vector(bundle, oracle_z=req.oracle_z)
        x_hat[lo:hi] = sample_batch(bundle, members, z, req.seed,
                                    indices=np.arange(lo, hi))
    return RecoveredEnsemble(x_hat=x_hat, model_id=fingerprint(bundle),
                             strategy=req.strategy, seed=req.seed,
                             encoder_passes=encoder_passes)


def recover_samples(bundle: ModelBundle, observations: np.ndarray,
                    n_samples: int, seed: int, oracle_z: np.ndarray = None,
                    strategy: str = None) -> np.ndarray:
    """Repeat recovery rounds over one observation set until n_samples
    accumulate; each round re-derives its own seed and (for padded
    strategies) its own duplication."""
    observations = np.asarray(observations, dtype=float)
    if n_samples < 1:
        raise ConfigError("sample count must be >= 1")
    if strategy is None:
        strategy = choose_strategy(observations.shape[0], bundle.n_train)
    out = np.empty((n_samples, observations.shape[1]))
    got = 0
    round_index = 0
    while got < n_samples:
        req = SampleRequest(
            observations=observations, strategy=strategy,
            seed=derive_seed(seed, "round", round_index), oracle_z=oracle_z,
        )
        ens = recover_ensemble(bundle, req)
        take = min(n_samples - got, ens.x_hat.shape[0])
        out[got:got + take] = ens.x_hat[:take]
        got += take
        round_index += 1
    return out


def recover_samples_restricted(bundle: ModelBundle,
                               observations: np.ndarray, n_info: int,
                               n_samples: int, seed: int,
                               oracle_z: np.ndarray = None) -> np.ndarray:
    """Recovery rounds where only the first n_info observations feed
    the set encoder (duplicated up to the training size), while every
    observation still receives its own posterior draws.

    Shrinking an observation budget mixes two effects: a small set
    starves the encoder of distributional information, and it also
    caps how many distinct measurements the sampler sees. This
    variant starves the encoder alone, so set-size studies measure
    the conditioning effect by itself. With n_info equal to the full
    set (at the training size) it reproduces recover_samples with the
    exact strategy bit for bit.
    """
    observations = np.asarray(observations, dtype=float)
    n_avail = observations.shape[0]
    if n_samples < 1:
        raise ConfigError("sample count must be >= 1")
    if not 1 <= n_info <= n_avail:
        raise ConfigError(
            f"conditioning subset size {n_info} must be in [1, {n_avail}]"
        )
    if n_info > bundle.n_train:
        raise ConfigError(
            f"conditioning subset size {n_info} exceeds the training set "
            f"size {bundle.n_train}; restriction only removes information"
        )
    if bundle.conditioning in (COND_LEARNED, COND_MOMENTS):
        info = observations[:n_info]
        pad_count = bundle.n_train - n_info
        if pad_count > 0:
            pad_rng = child_rng(seed, "pad", 0)
            pad_rows = pad_rng.integers(0, n_info, size=pad_count)
            enc_set = np.concatenate([info, info[pad_rows]], axis=0)
        else:
            enc_set = info
        z = condition_vector(bundle, y_set=enc_set)
    else:
        z = condition_vector(bundle, oracle_z=oracle_z)
    out = np.empty((n_samples, observations.shape[1]))
    got = 0
    round_index = 0
    while got < n_samples:
        draws = sample_batch(
            bundle, observations, z,
            derive_seed(seed, "round", round_index),
            indices=np.arange(n_avail),
        )
        take = min(n_avail, n_samples - got)
        out[got:got + take] = draws[:take]
        got += take
        round_index += 1
    return out
