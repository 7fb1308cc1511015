"""Distributional evaluation: 1-D Wasserstein-1, sliced Wasserstein
over random projections, and expected-coverage diagnostics with the
scalar deviation e.

The coverage test follows the random-reference-point construction: for
each truth/posterior pair a reference point is drawn uniformly from the
(inflated) bounding box of all truths and samples, the posterior mass
closer to the reference than the truth gives a per-pair credibility
f_i, and the expected coverage at level 1-alpha is the fraction of
pairs with f_i <= 1-alpha.  A calibrated posterior tracks the diagonal.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .datafiles import atomic_write_text
from .generative import recover_samples, recover_samples_restricted
from .nn.bundle import COND_ORACLE, ModelBundle
from .rng import child_rng, derive_seed
from .synthetic import ForwardSpec, PriorSpec, make_pair_dataset

CSV_HEADER = "experiment,gamma,mu1,mu2,method,metric,value,n_samples,seed"


def wasserstein1_1d(a, b) -> float:
    """Empirical W1 between two 1-D samples.

    Equal sizes reduce to the mean absolute difference of co-sorted
    values; unequal sizes integrate |inverse-CDF difference| exactly
    over the merged quantile grid.
    """
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("wasserstein1_1d needs non-empty inputs")
    if a.size == b.size:
        return float(np.mean(np.abs(a - b)))
    n, m = a.size, b.size
    qs = np.unique(np.concatenate([
        np.arange(n + 1) / n, np.arange(m + 1) / m]))
    widths = np.diff(qs)
    mids = (qs[:-1] + qs[1:]) / 2.0
    ia = np.minimum((mids * n).astype(int), n - 1)
    ib = np.minimum((mids * m).astype(int), m - 1)
    return float(np.sum(widths * np.abs(a[ia] - b[ib])))


@dataclass
class SwdConfig:
    n_projections: int = 128
    seed: int = 0
    assume_equal_sizes: bool = False

    def __post_init__(self):
        if self.n_projections < 1:
            raise ValueError("projection count must be >= 1")


def sliced_wasserstein(a: np.ndarray, b: np.ndarray, cfg: SwdConfig) -> float:
    """Mean W1 over seeded uniformly random unit directions."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError("inputs must share one (n, d) dimensionality")
    if cfg.assume_equal_sizes and a.shape[0] != b.shape[0]:
        raise ValueError("size mismatch with assume_equal_sizes set")
    rng = child_rng(cfg.seed, "projections")
    directions = rng.standard_normal((cfg.n_projections, a.shape[1]))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    if not np.all(norms > 0):
        raise ValueError("degenerate projection draw")
    directions /= norms
    pa = a @ directions.T
    pb = b @ directions.T
    total = 0.0
    for j in range(cfg.n_projections):
        total += wasserstein1_1d(pa[:, j], pb[:, j])
    return total / cfg.n_projections


@dataclass
class TarpConfig:
    n_levels: int = 99
    levels: np.ndarray = None
    inflation: float = 0.1
    seed: int = 0

    def grid(self) -> np.ndarray:
        if self.levels is not None:
            levels = np.asarray(self.levels, dtype=float)
        else:
            levels = np.linspace(0.01, 0.99, self.n_levels)
        if levels.size == 0 or np.any(levels <= 0) or np.any(levels > 1):
            raise ValueError("credibility levels must lie in (0, 1]")
        return levels


@dataclass
class CoverageCurve:
    levels: np.ndarray
    ecp: np.ndarray
    credibilities: np.ndarray = None  # per-pair f_i, kept for inspection

    def __post_init__(self):
        if self.levels.shape != self.ecp.shape:
            raise ValueError("levels and ECP must align")


def tarp_coverage(truths, sample_sets, cfg: TarpConfig) -> CoverageCurve:
    """Expected coverage of posterior sample sets against their truths.

    ``truths`` is (P, d); ``sample_sets`` is a length-P sequence of
    (S_i, d) arrays (S_i may vary).
    """
    truths = np.asarray(truths, dtype=float)
    if truths.ndim != 2:
        raise ValueError("truths must be (n_pairs, d)")
    if len(sample_sets) != truths.shape[0]:
        raise ValueError("one sample set per truth is required")
    sets = [np.asarray(s, dtype=float) for s in sample_sets]
    for s in sets:
        if s.ndim != 2 or s.shape[0] < 1 or s.shape[1] != truths.shape[1]:
            raise ValueError("sample sets must be non-empty (n, d) arrays")

    everything = np.concatenate([truths] + sets, axis=0)
    lo = everything.min(axis=0)
    hi = everything.max(axis=0)
    center = (lo + hi) / 2.0
    half = (hi - lo) / 2.0 * (1.0 + cfg.inflation)
    rng = child_rng(cfg.seed, "tarp-ref")
    refs = rng.uniform(center - half, center + half,
                       size=(truths.shape[0], truths.shape[1]))

    f = np.empty(truths.shape[0])
    for i, samples in enumerate(sets):
        d_samples = np.linalg.norm(samples - refs[i], axis=1)
        d_truth = np.linalg.norm(truths[i] - refs[i])
        f[i] = np.mean(d_samples < d_truth)

    levels = cfg.grid()
    ecp = np.array([np.mean(f <= level) for level in levels])
    return CoverageCurve(levels=levels, ecp=ecp, credibilities=f)


def tarp_deviation(curve: CoverageCurve) -> float:
    """Mean absolute deviation of the coverage curve from the diagonal."""
    if curve.levels.size == 0:
        raise ValueError("empty coverage curve")
    return float(np.mean(np.abs(curve.ecp - curve.levels)))


def gaussian_posterior_self_test(n_pairs: int, n_samples: int, seed: int,
                                 noise_std: float = 0.5,
                                 point_mass: bool = False):
    """Truth/posterior-sample data with a known 1-D Gaussian posterior.

    Prior N(0,1), observation y = x + noise_std * noise, so the exact
    posterior is N(y/(1+noise_std^2), noise_std^2/(1+noise_std^2)).
    ``point_mass`` swaps the calibrated sampler for one returning the
    prior mean, a deliberately failing control.
    """
    rng = child_rng(seed, "tarp-oracle")
    truths = rng.standard_normal((n_pairs, 1))
    ys = truths[:, 0] + noise_std * rng.standard_normal(n_pairs)
    var = noise_std ** 2 / (1.0 + noise_std ** 2)
    mean = ys * (1.0 / (1.0 + noise_std ** 2))
    sets = []
    for i in range(n_pairs):
        if point_mass:
            sets.append(np.zeros((n_samples, 1)))
        else:
            draws = mean[i] + np.sqrt(var) * rng.standard_normal(n_samples)
            sets.append(draws[:, None])
    return truths, sets


@dataclass
class MetricRow:
    experiment: str
    gamma: float
    mu1: float
    mu2: float
    method: str
    metric: str
    value: float
    n_samples: int
    seed: int

    def format(self) -> str:
        return ",".join([
            self.experiment,
            format(float(self.gamma), ".17g"),
            format(float(self.mu1), ".17g"),
            format(float(self.mu2), ".17g"),
            self.method,
            self.metric,
            format(float(self.value), ".17g"),
            str(int(self.n_samples)),
            str(int(self.seed)),
        ])


def write_metric_csv(path, rows) -> None:
    lines = [CSV_HEADER] + [row.format() for row in rows]
    atomic_write_text(path, "\n".join(lines) + "\n")


def sweep_row(bundle: ModelBundle, prior: PriorSpec, fwd: ForwardSpec,
              n_samples: int, n_available: int, seed: int,
              n_projections: int = 128) -> float:
    """One sweep cell: fresh pairs from the prior, recovery from the
    first ``n_available`` observations, SWD against the fresh truths.

    The evaluation pool and projection directions depend only on
    (seed, prior), so methods compared at one cell see identical data.
    """
    labels = tuple(float(v) for v in prior.param_vector())
    pool = make_pair_dataset(prior, fwd, n_samples,
                             child_rng(seed, "eval", *labels))
    n_available = min(n_available, n_samples)
    observations = pool.y[:n_available]
    oracle_z = prior.param_vector() if bundle.conditioning == COND_ORACLE else None
    recovered = recover_samples(
        bundle, observations, n_samples,
        derive_seed(seed, "recover", bundle.method, *labels),
        oracle_z=oracle_z,
    )
    cfg = SwdConfig(n_projections=n_projections,
                    seed=derive_seed(seed, "swd", *labels))
    return sliced_wasserstein(recovered, pool.x, cfg)


def nprime_row(bundle: ModelBundle, prior: PriorSpec, fwd: ForwardSpec,
               n_samples: int, n_info: int, seed: int,
               n_projections: int = 128, n_reps: int = 5) -> float:
    """One set-size study cell: identical evaluation pool, recovery
    targets, and projections as sweep_row at the same seed, but only
    n_info observations carry the set conditioning.

    With n_info at the sweep's full observation budget the value
    matches sweep_row exactly, anchoring the study to the sweep.
    Smaller n_info isolates how impoverished ensemble information
    degrades the recovery rather than how few measurements it uses,
    and the cell averages the SWD over n_reps independent
    conditioning subsets: a handful of observations is a high-variance
    summary of the prior, so a single draw would measure subset luck
    more than the trend.
    """
    labels = tuple(float(v) for v in prior.param_vector())
    pool = make_pair_dataset(prior, fwd, n_samples,
                             child_rng(seed, "eval", *labels))
    n_available = min(bundle.n_train, n_samples)
    observations = pool.y[:n_available]
    oracle_z = prior.param_vector() if bundle.conditioning == COND_ORACLE else None
    cfg = SwdConfig(n_projections=n_projections,
                    seed=derive_seed(seed, "swd", *labels))
    recover_seed = derive_seed(seed, "recover", bundle.method, *labels)
    if n_info >= n_available:
        recovered = recover_samples_restricted(
            bundle, observations, n_available, n_samples, recover_seed,
            oracle_z=oracle_z,
        )
        return sliced_wasserstein(recovered, pool.x, cfg)
    if n_reps < 1:
        raise ValueError("subset repetition count must be >= 1")
    total = 0.0
    for rep in range(n_reps):
        perm = child_rng(seed, "info", *labels, rep).permutation(n_available)
        recovered = recover_samples_restricted(
            bundle, observations[perm], n_info, n_samples,
            derive_seed(recover_seed, "rep", rep), oracle_z=oracle_z,
        )
        total += sliced_wasserstein(recovered, pool.x, cfg)
    return total / n_reps


def swd_sweep(bundle: ModelBundle, priors, fwd: ForwardSpec, n_samples: int,
              seed: int, experiment: str, n_available: int = None,
              n_projections: int = 128):
    """SWD rows over a prior grid; returns (rows, per-row durations)."""
    if not priors:
        raise ValueError("empty prior grid")
    rows = []
    durations = []
    for prior in priors:
        navail = n_available if n_available is not None else min(
            n_samples, bundle.n_train)
        started = time.perf_counter()
        value = sweep_row(bundle, prior, fwd, n_samples, navail, seed,
                          n_projections=n_projections)
        durations.append(time.perf_counter() - started)
        rows.append(MetricRow(
            experiment=experiment, gamma=prior.correlation(),
            mu1=prior.mean()[0], mu2=prior.mean()[1], method=bundle.method,
            metric="swd", value=value, n_samples=n_samples, seed=seed,
        ))
    return rows, durations
