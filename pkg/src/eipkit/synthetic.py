"""Synthetic data model: Gaussian prior families, the noisy linear
forward model, and multi-prior training corpora.

Truths are drawn from a bivariate Gaussian whose covariance is
``[[1, g], [g, 1]]`` (one-parameter family, zero mean) or whose mean is
``(mu1, mu2)`` with correlation ``gamma1`` (three-parameter family).
Observations are ``y = A x + n`` with state-dependent noise
``n ~ N(mean_scale * x, var_scale * |x|^2 * I)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .rng import child_rng

GAUSS2D = "gauss2d"
GAUSS2D_3PARAM = "gauss2d-3param"

DEFAULT_FORWARD_MATRIX = ((1.0, 0.5), (0.5, 2.0))


@dataclass(frozen=True)
class PriorSpec:
    """One member of the Gaussian prior family.

    ``gamma`` is the correlation for the one-parameter family;
    ``mu1, mu2, gamma1`` parameterize the three-parameter family.
    """

    family: str = GAUSS2D
    gamma: float = 0.0
    mu1: float = 0.0
    mu2: float = 0.0
    gamma1: float = 0.0

    def __post_init__(self):
        if self.family not in (GAUSS2D, GAUSS2D_3PARAM):
            raise ConfigError(f"unknown prior family: {self.family!r}")
        corr = self.gamma if self.family == GAUSS2D else self.gamma1
        if not np.isfinite(corr) or abs(corr) > 1.0:
            raise ConfigError(f"correlation must lie in [-1, 1], got {corr!r}")
        if self.family == GAUSS2D_3PARAM and not (
            np.isfinite(self.mu1) and np.isfinite(self.mu2)
        ):
            raise ConfigError("means must be finite")

    @property
    def d(self) -> int:
        return 2

    def mean(self) -> np.ndarray:
        if self.family == GAUSS2D:
            return np.zeros(2)
        return np.array([self.mu1, self.mu2], dtype=float)

    def correlation(self) -> float:
        return self.gamma if self.family == GAUSS2D else self.gamma1

    def covariance(self) -> np.ndarray:
        g = self.correlation()
        return np.array([[1.0, g], [g, 1.0]])

    def param_vector(self) -> np.ndarray:
        """Raw prior parameters, used as the oracle conditioning vector."""
        if self.family == GAUSS2D:
            return np.array([self.gamma])
        return np.array([self.mu1, self.mu2, self.gamma1])

    def label(self) -> str:
        if self.family == GAUSS2D:
            return f"gamma={self.gamma!r}"
        return f"mu1={self.mu1!r},mu2={self.mu2!r},gamma1={self.gamma1!r}"


@dataclass(frozen=True)
class ForwardSpec:
    """Linear measurement with multiplicative-amplitude Gaussian noise."""

    matrix: tuple = DEFAULT_FORWARD_MATRIX
    noise_mean_scale: float = 0.2
    noise_var_scale: float = 0.25

    def __post_init__(self):
        a = np.asarray(self.matrix, dtype=float)
        if a.shape != (2, 2) or not np.all(np.isfinite(a)):
            raise ConfigError("forward matrix must be a finite 2x2 matrix")
        if self.noise_mean_scale < 0 or self.noise_var_scale < 0:
            raise ConfigError("noise scales must be >= 0")
        object.__setattr__(self, "matrix", tuple(map(tuple, a.tolist())))

    @property
    def a(self) -> np.ndarray:
        return np.asarray(self.matrix, dtype=float)


@dataclass
class PairDataset:
    """Aligned truth/observation arrays generated from one prior."""

    prior: PriorSpec
    x: np.ndarray  # (n, d)
    y: np.ndarray  # (n, d)

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.float64)
        if self.x.ndim != 2 or self.x.shape != self.y.shape:
            raise ValueError("x and y must be matching (n, d) arrays")
        if self.x.shape[0] < 1:
            raise ValueError("dataset must contain at least one pair")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError("dataset contains non-finite values")

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]


@dataclass
class Corpus:
    """Multiple PairDatasets sharing one forward model."""

    datasets: list = field(default_factory=list)
    forward: ForwardSpec = ForwardSpec()
    seed: int = 0

    def __post_init__(self):
        if len(self.datasets) < 1:
            raise ConfigError("corpus needs at least one dataset")

    def __len__(self) -> int:
        return len(self.datasets)

    @property
    def d(self) -> int:
        return self.datasets[0].d

    def all_pairs(self):
        xs = np.concatenate([ds.x for ds in self.datasets], axis=0)
        ys = np.concatenate([ds.y for ds in self.datasets], axis=0)
        return xs, ys


def _cholesky_factor(gamma: float) -> np.ndarray:
    # Rank-deficient at |gamma| = 1: second row becomes (+-1, 0) exactly.
    return np.array([[1.0, 0.0], [gamma, np.sqrt(max(0.0, 1.0 - gamma * gamma))]])


def sample_prior(spec: PriorSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` i.i.d. truths from the prior.

    Returns an (n, 2) array.  Deterministic given the generator state;
    degenerate correlations +-1 produce exactly collinear coordinates.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    z = rng.standard_normal((n, 2))
    factor = _cholesky_factor(spec.correlation())
    return z @ factor.T + spec.mean()


def apply_forward(x: np.ndarray, fwd: ForwardSpec, rng: np.random.Generator) -> np.ndarray:
    """Push one truth through the forward model: ``y = A x + n(x)``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (2,) or not np.all(np.isfinite(x)):
        raise ValueError("x must be a finite 2-vector")
    return apply_forward_batch(x[None, :], fwd, rng)[0]


def apply_forward_batch(x: np.ndarray, fwd: ForwardSpec, rng: np.random.Generator) -> np.ndarray:
    """Vectorized forward model over an (n, 2) array of truths.

    Noise coordinates are independent given x; at ``x = 0`` both the
    noise mean and variance vanish so ``y = 0`` exactly.
    """
    x = np.asarray(x, dtype=float)
    std = np.sqrt(fwd.noise_var_scale) * np.linalg.norm(x, axis=1, keepdims=True)
    xi = rng.standard_normal(x.shape)
    return x @ fwd.a.T + fwd.noise_mean_scale * x + std * xi


def make_pair_dataset(
    spec: PriorSpec, fwd: ForwardSpec, n: int, rng: np.random.Generator
) -> PairDataset:
    """Generate ``n`` truth/observation pairs in generation order."""
    x = sample_prior(spec, n, rng)
    y = apply_forward_batch(x, fwd, rng)
    return PairDataset(prior=spec, x=x, y=y)


def make_training_corpus(
    specs: list, fwd: ForwardSpec, n_per: int, seed: int
) -> Corpus:
    """One dataset per prior spec, each from an independent stream.

    Streams derive from ``(seed, "dataset", index)`` so datasets can be
    generated in parallel without changing the result.
    """
    if not specs:
        raise ConfigError("at least one prior spec is required")
    datasets = []
    for idx, spec in enumerate(specs):
        rng = child_rng(seed, "dataset", idx)
        datasets.append(make_pair_dataset(spec, fwd, n_per, rng))
    return Corpus(datasets=datasets, forward=fwd, seed=seed)


def interval_grid(intervals, count_per_interval: int) -> list:
    """Evenly spaced values over a union of closed intervals.

    ``intervals`` is a sequence of (lo, hi) pairs; each contributes
    ``count_per_interval`` values including both endpoints.
    """
    if count_per_interval < 1:
        raise ConfigError("count per interval must be >= 1")
    values = []
    for lo, hi in intervals:
        if lo > hi:
            raise ConfigError(f"empty interval [{lo}, {hi}]")
        if count_per_interval == 1:
            values.append(0.5 * (lo + hi))
        else:
            values.extend(np.linspace(lo, hi, count_per_interval).tolist())
    return values


def default_gamma_grid(count_per_interval: int = 10) -> list:
    """Training correlations: [-0.75, -0.25] and [0.25, 0.75]."""
    return interval_grid([(-0.75, -0.25), (0.25, 0.75)], count_per_interval)


def default_3param_grid(corr_per_interval: int = 2, mean_per_interval: int = 2) -> list:
    """Cartesian grid over the three-parameter training ranges."""
    corrs = interval_grid([(-0.75, -0.25), (0.25, 0.75)], corr_per_interval)
    means = interval_grid([(-1.5, -0.5), (0.5, 1.5)], mean_per_interval)
    specs = []
    for g1 in corrs:
        for m1 in means:
            for m2 in means:
                specs.append(
                    PriorSpec(family=GAUSS2D_3PARAM, mu1=m1, mu2=m2, gamma1=g1)
                )
    return specs
