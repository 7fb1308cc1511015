"""Command-line experiment driver.

Subcommands cover the full pipeline: ``gen-data`` writes a multi-prior
corpus, ``train`` fits a model, ``recover`` samples an ensemble for an
observation file, ``sweep`` scores checkpoints over a prior grid,
``tarp`` runs coverage diagnostics, and ``nprime-study`` runs the
set-size ablations.  Every command takes ``--config`` plus repeatable
``--set section.key=value`` overrides; the resolved configuration is
echoed into the output directory and a JSON run manifest records
timings and artifact paths.

Exit codes: 0 success, 2 configuration, 3 I/O or file format,
4 numeric failure during training, 5 sampler divergence.  Errors print
one ``error: <category>: <reason>`` line on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .config import (
    eval_priors,
    forward_spec,
    load_config,
    render_config,
    resolve_output_dir,
    training_priors,
)
from .datafiles import (
    atomic_write_text,
    load_corpus,
    load_dataset,
    save_corpus,
    save_ensemble,
)
from .errors import ConfigError, EipError, NumericFailure
from .generative import (
    SampleRequest,
    TrainConfig,
    choose_strategy,
    condition_vector,
    recover_ensemble,
    sample_batch,
    train,
)
from .metrics import (
    MetricRow,
    TarpConfig,
    gaussian_posterior_self_test,
    nprime_row,
    sweep_row,
    swd_sweep,
    tarp_coverage,
    tarp_deviation,
    write_metric_csv,
)
from .nn.bundle import COND_ORACLE, load_checkpoint, save_checkpoint
from .rng import child_rng, derive_seed
from .synthetic import (
    GAUSS2D,
    GAUSS2D_3PARAM,
    PriorSpec,
    make_pair_dataset,
    make_training_corpus,
)


class _Parser(argparse.ArgumentParser):
    """Argument parser with single-line machine-parsable errors."""

    def error(self, message):
        print(f"error: config: {message}", file=sys.stderr)
        raise SystemExit(2)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eipkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="INI experiment configuration")
        p.add_argument("--set", action="append", default=[], metavar="KEY=V",
                       help="override section.key=value")
        return p

    p = common(sub.add_parser("gen-data", help="write the training corpus"))
    p.add_argument("--out", help="corpus path (default <outdir>/corpus.eipc)")

    p = common(sub.add_parser("train", help="train a model on a corpus"))
    p.add_argument("--corpus", help="corpus path (default <outdir>/corpus.eipc)")
    p.add_argument("--out", help="checkpoint path (default <outdir>/model-<method>.eipm)")

    p = common(sub.add_parser("recover", help="recover an ensemble for an observation file"))
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--observations", required=True,
                   help="dataset file whose observations are recovered")
    p.add_argument("--out", help="ensemble path (default <outdir>/recovered.eipr)")

    p = common(sub.add_parser("sweep", help="score checkpoints over the prior grid"))
    p.add_argument("--model", action="append", required=True,
                   help="checkpoint path (repeatable)")
    p.add_argument("--out", help="CSV path (default <outdir>/sweep.csv)")
    p.add_argument("--full", action="store_true",
                   help="full-scale grid: 201 correlations, 40000 samples")
    p.add_argument("--plot-data", metavar="DIR",
                   help="also write two-column per-method plot files")
    p.add_argument("--svg", metavar="PATH", help="also write a line chart")

    p = common(sub.add_parser("tarp", help="coverage diagnostic"))
    p.add_argument("--model", help="checkpoint to diagnose")
    p.add_argument("--self-test", action="store_true",
                   help="analytic-posterior check of the metric itself")
    p.add_argument("--point-mass", action="store_true",
                   help="degenerate-sampler negative control")
    p.add_argument("--out", help="CSV path (default <outdir>/tarp.csv)")

    p = common(sub.add_parser("nprime-study", help="observation-set size ablations"))
    p.add_argument("--model", help="checkpoint (inference study)")
    p.add_argument("--corpus", help="corpus (training study)")
    p.add_argument("--train-study", action="store_true",
                   help="vary the training set size instead of the inference one")
    p.add_argument("--out", help="CSV path (default <outdir>/nprime.csv)")
    return parser


def _train_config(cfg: dict) -> TrainConfig:
    model = cfg["model"]
    trn = cfg["train"]
    return TrainConfig(
        kind=model["kind"], conditioning=model["conditioning"],
        encoder=model["encoder"], k=model["k"], n_subset=trn["n_subset"],
        steps=trn["steps"], batch=trn["batch"], lr=trn["lr"],
        optimizer=trn["optimizer"], seed=cfg["run"]["seed"],
        t_steps=model["t_steps"], beta1=model["beta_start"],
        beta_t=model["beta_end"], sigma_mode=model["sigma_mode"],
        dt=model["dt"], replace=trn["replace"], hidden=model["hidden"],
        width=model["width"], heads=model["heads"],
        inducing=model["inducing"], moments_p=model["moments_p"],
    )


def _write_loss_csv(path, loss_log, every: int) -> None:
    lines = ["step,loss"]
    last = len(loss_log) - 1
    for i, (step, value) in enumerate(loss_log):
        if i % max(1, every) == 0 or i == last:
            lines.append(f"{step},{format(value, '.17g')}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def _write_plot_data(directory, rows) -> list:
    os.makedirs(directory, exist_ok=True)
    by_method = {}
    for row in rows:
        by_method.setdefault(row.method, []).append((row.gamma, row.value))
    paths = []
    for method, points in by_method.items():
        path = os.path.join(directory, f"{method}.dat")
        lines = [f"{format(g, '.17g')}\t{format(v, '.17g')}"
                 for g, v in points]
        atomic_write_text(path, "\n".join(lines) + "\n")
        paths.append(path)
    return paths


def _write_svg(path, rows, xlabel: str, ylabel: str) -> None:
    by_method = {}
    for row in rows:
        by_method.setdefault(row.method, []).append((row.gamma, row.value))
    width, height, margin = 640, 420, 56
    xs = [g for pts in by_method.values() for g, _ in pts]
    ys = [v for pts in by_method.values() for _, v in pts]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = 0.0, max(ys) * 1.05 or 1.0
    if x_hi == x_lo:
        x_hi = x_lo + 1.0

    def sx(x):
        return margin + (x - x_lo) / (x_hi - x_lo) * (width - 2 * margin)

    def sy(y):
        return height - margin - (y - y_lo) / (y_hi - y_lo) * (height - 2 * margin)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle" '
        f'font-size="13">{xlabel}</text>',
        f'<text x="16" y="{height / 2}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 16 {height / 2})">{ylabel}</text>',
    ]
    for i, (method, points) in enumerate(by_method.items()):
        color = colors[i % len(colors)]
        pts = " ".join(f"{sx(g):.2f},{sy(v):.2f}"
                       for g, v in sorted(points))
        parts.append(f'<polyline points="{pts}" fill="none" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{width - margin + 4}" '
                     f'y="{margin + 16 * i + 10}" font-size="12" '
                     f'fill="{color}">{method}</text>')
    parts.append("</svg>")
    atomic_write_text(path, "\n".join(parts) + "\n")


def cmd_gen_data(cfg, args, outdir) -> list:
    out = args.out or os.path.join(outdir, "corpus.eipc")
    corpus = make_training_corpus(training_priors(cfg), forward_spec(cfg),
                                  cfg["data"]["n_per"], cfg["run"]["seed"])
    save_corpus(out, corpus)
    return [out]


def cmd_train(cfg, args, outdir) -> list:
    corpus_path = args.corpus or os.path.join(outdir, "corpus.eipc")
    corpus = load_corpus(corpus_path)
    if corpus.datasets[0].prior.family != cfg["data"]["family"]:
        raise ConfigError(
            f"corpus family {corpus.datasets[0].prior.family!r} does not "
            f"match configured {cfg['data']['family']!r}"
        )
    tc = _train_config(cfg)
    loss_log = []
    try:
        bundle = train(corpus, tc, loss_log=loss_log)
    except NumericFailure as exc:
        diag = os.path.join(outdir, "numeric-failure.json")
        atomic_write_text(diag, json.dumps({
            "step": exc.step, "batch_index": exc.batch_index,
            "message": str(exc),
            "recent_losses": [v for _, v in loss_log[-20:]],
        }, indent=2) + "\n")
        raise
    out = args.out or os.path.join(outdir, f"model-{bundle.method}.eipm")
    save_checkpoint(bundle, out)
    loss_path = os.path.join(outdir, f"loss-{bundle.method}.csv")
    _write_loss_csv(loss_path, loss_log, cfg["train"]["loss_log_every"])
    return [out, loss_path]


def cmd_recover(cfg, args, outdir) -> list:
    bundle = load_checkpoint(args.model)
    ds = load_dataset(args.observations)
    strategy = cfg["sample"]["strategy"]
    if strategy == "auto":
        strategy = choose_strategy(len(ds), bundle.n_train)
    oracle_z = None
    if bundle.conditioning == COND_ORACLE:
        oracle_z = ds.prior.param_vector()
    req = SampleRequest(
        observations=ds.y, strategy=strategy,
        seed=derive_seed(cfg["run"]["seed"], "recover-cmd", bundle.method),
        oracle_z=oracle_z,
    )
    ens = recover_ensemble(bundle, req)
    out = args.out or os.path.join(outdir, "recovered.eipr")
    save_ensemble(out, ds.prior, ens.x_hat, req.seed,
                  method=f"{bundle.method}/{ens.strategy}")
    return [out]


def cmd_sweep(cfg, args, outdir) -> list:
    fwd = forward_spec(cfg)
    priors = eval_priors(cfg, full=args.full)
    n_samples = 40000 if args.full else cfg["eval"]["n_samples"]
    seed = cfg["run"]["seed"]
    rows = []
    durations = {}
    for path in args.model:
        bundle = load_checkpoint(path)
        method_rows, row_durations = swd_sweep(
            bundle, priors, fwd, n_samples, seed,
            experiment=cfg["run"]["experiment"],
            n_projections=cfg["eval"]["n_projections"],
        )
        rows.extend(method_rows)
        durations[bundle.method] = row_durations
    out = args.out or os.path.join(outdir, "sweep.csv")
    write_metric_csv(out, rows)
    artifacts = [out]
    if args.plot_data:
        artifacts.extend(_write_plot_data(args.plot_data, rows))
    if args.svg:
        _write_svg(args.svg, rows, xlabel="correlation", ylabel="swd")
        artifacts.append(args.svg)
    _STAGE_DURATIONS.update(durations)
    return artifacts


def cmd_tarp(cfg, args, outdir) -> list:
    seed = cfg["run"]["seed"]
    ev = cfg["eval"]
    modes = sum([bool(args.model), args.self_test, args.point_mass])
    if modes != 1:
        raise ConfigError(
            "pick exactly one of --model, --self-test, --point-mass"
        )
    if args.model:
        bundle = load_checkpoint(args.model)
        if cfg["data"]["family"] == GAUSS2D:
            prior = PriorSpec(gamma=ev["tarp_gamma"])
        else:
            points = ev["points"]
            if not points:
                raise ConfigError("eval.points is required for tarp on the "
                                  "three-parameter family")
            prior = PriorSpec(family=GAUSS2D_3PARAM, mu1=points[0][0],
                              mu2=points[0][1], gamma1=points[0][2])
        fwd = forward_spec(cfg)
        pairs = ev["tarp_pairs"]
        per_pair = ev["tarp_samples"]
        pool = make_pair_dataset(prior, fwd, pairs,
                                 child_rng(seed, "tarp-pairs"))
        ensemble_obs = make_pair_dataset(
            prior, fwd, bundle.n_train, child_rng(seed, "tarp-ensemble")).y
        oracle_z = prior.param_vector() if bundle.conditioning == COND_ORACLE else None
        z = condition_vector(bundle, y_set=ensemble_obs, oracle_z=oracle_z)
        repeated = np.repeat(pool.y, per_pair, axis=0)
        draws = sample_batch(bundle, repeated, z,
                             derive_seed(seed, "tarp-sample"),
                             indices=np.arange(pairs * per_pair))
        sets = [draws[i * per_pair:(i + 1) * per_pair] for i in range(pairs)]
        truths = pool.x
        method = bundle.method
    else:
        truths, sets = gaussian_posterior_self_test(
            ev["tarp_pairs"], ev["tarp_samples"], seed,
            point_mass=args.point_mass)
        method = "point-mass" if args.point_mass else "analytic"

    curve = tarp_coverage(truths, sets,
                          TarpConfig(seed=derive_seed(seed, "tarp-ref")))
    deviation = tarp_deviation(curve)
    out = args.out or os.path.join(outdir, "tarp.csv")
    lines = ["method,metric,credibility,value"]
    for level, ecp in zip(curve.levels, curve.ecp):
        lines.append(f"{method},ecp,{format(level, '.17g')},"
                     f"{format(ecp, '.17g')}")
    lines.append(f"{method},deviation,,{format(deviation, '.17g')}")
    atomic_write_text(out, "\n".join(lines) + "\n")
    return [out]


def cmd_nprime_study(cfg, args, outdir) -> list:
    if cfg["data"]["family"] != GAUSS2D:
        raise ConfigError("set-size studies are defined for the "
                          "one-parameter family")
    ev = cfg["eval"]
    seed = cfg["run"]["seed"]
    fwd = forward_spec(cfg)
    prior = PriorSpec(gamma=ev["nprime_gamma"])
    n_samples = ev["n_samples"]
    rows = []
    if args.train_study:
        corpus_path = args.corpus or os.path.join(outdir, "corpus.eipc")
        corpus = load_corpus(corpus_path)
        smallest = min(len(ds) for ds in corpus.datasets)
        for n_train in ev["ntrain_list"]:
            tc = _train_config(cfg)
            tc.n_subset = n_train
            tc.replace = tc.replace or n_train > smallest
            if tc.batch > n_train:
                tc.batch = 0
            bundle = train(corpus, tc)
            value = sweep_row(bundle, prior, fwd, n_samples,
                              min(n_samples, n_train), seed,
                              n_projections=ev["n_projections"])
            rows.append(MetricRow(
                experiment=f"ntrain-{n_train}", gamma=prior.gamma,
                mu1=0.0, mu2=0.0, method=bundle.method, metric="swd",
                value=value, n_samples=n_samples, seed=seed))
    else:
        if not args.model:
            raise ConfigError("the inference study needs --model")
        bundle = load_checkpoint(args.model)
        for n_prime in ev["nprime_list"]:
            value = nprime_row(bundle, prior, fwd, n_samples, n_prime, seed,
                               n_projections=ev["n_projections"],
                               n_reps=ev["nprime_reps"])
            rows.append(MetricRow(
                experiment=f"nprime-{n_prime}", gamma=prior.gamma,
                mu1=0.0, mu2=0.0, method=bundle.method, metric="swd",
                value=value, n_samples=n_samples, seed=seed))
    out = args.out or os.path.join(outdir, "nprime.csv")
    write_metric_csv(out, rows)
    return [out]


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "recover": cmd_recover,
    "sweep": cmd_sweep,
    "tarp": cmd_tarp,
    "nprime-study": cmd_nprime_study,
}

_STAGE_DURATIONS: dict = {}


def _dispatch(argv) -> int:
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config, args.set)
    outdir = resolve_output_dir(cfg)
    resolved = render_config(cfg)
    atomic_write_text(os.path.join(outdir, "config.resolved.ini"), resolved)

    _STAGE_DURATIONS.clear()
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    # Divergence is detected by explicit finiteness checks and reported
    # through the exit-code protocol; the raw overflow warnings would
    # only pollute the single-line stderr contract.
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        artifacts = _COMMANDS[args.command](cfg, args, outdir)
    elapsed = time.perf_counter() - t0
    finished = datetime.now(timezone.utc)

    manifest = {
        "command": args.command,
        "tool_version": __version__,
        "config_hash": hashlib.sha256(resolved.encode()).hexdigest(),
        "started": started.isoformat(),
        "finished": finished.isoformat(),
        "duration_s": elapsed,
        "stage_durations_s": dict(_STAGE_DURATIONS),
        "artifacts": [os.path.abspath(a) for a in artifacts],
    }
    atomic_write_text(os.path.join(outdir, f"{args.command}.manifest.json"),
                      json.dumps(manifest, indent=2) + "\n")
    return 0


def main(argv=None) -> int:
    try:
        return _dispatch(argv)
    except EipError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
