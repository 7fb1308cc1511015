"""End-to-end subprocess tests for the command-line driver."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from eipkit.datafiles import save_dataset
from eipkit.rng import child_rng
from eipkit.synthetic import ForwardSpec, PriorSpec, make_pair_dataset

TINY = [
    "--set", "data.n_per=200",
    "--set", "train.steps=40",
    "--set", "train.n_subset=200",
    "--set", "train.batch=32",
    "--set", "eval.n_samples=150",
    "--set", "eval.n_projections=8",
]


def run_cli(args, outdir, extra_env=None):
    env = dict(os.environ)
    if extra_env:
        env.update(extra_env)
    return subprocess.run(
        [sys.executable, "-m", "eipkit.cli"] + args
        + ["--set", f"run.output_dir={outdir}"],
        capture_output=True, text=True, env=env)


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    """gen-data plus a short training, shared across CLI tests."""
    outdir = str(tmp_path_factory.mktemp("cli"))
    r = run_cli(["gen-data"] + TINY, outdir)
    assert r.returncode == 0, r.stderr
    r = run_cli(["train"] + TINY, outdir)
    assert r.returncode == 0, r.stderr
    return outdir


def test_version_flag(tmp_path):
    r = subprocess.run([sys.executable, "-m", "eipkit.cli", "--version"],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert r.stdout.strip()


def test_gen_data_writes_corpus_and_manifest(pipeline_dir):
    assert os.path.exists(os.path.join(pipeline_dir, "corpus.eipc"))
    assert os.path.exists(os.path.join(pipeline_dir,
                                       "corpus.eipc.manifest.txt"))
    manifest = json.load(open(os.path.join(pipeline_dir,
                                           "gen-data.manifest.json")))
    assert manifest["command"] == "gen-data"
    assert manifest["artifacts"]


def test_train_writes_model_and_loss(pipeline_dir):
    assert os.path.exists(os.path.join(pipeline_dir, "model-ei-fm.eipm"))
    loss = open(os.path.join(pipeline_dir, "loss-ei-fm.csv")).read()
    assert loss.splitlines()[0] == "step,loss"
    assert os.path.exists(os.path.join(pipeline_dir,
                                       "config.resolved.ini"))


def test_recover_roundtrip(pipeline_dir, tmp_path):
    obs = make_pair_dataset(PriorSpec(gamma=0.9), ForwardSpec(), 50,
                            child_rng(1, "cli-obs"))
    obs_path = str(tmp_path / "obs.eipd")
    save_dataset(obs_path, obs)
    r = run_cli(["recover", "--model",
                 os.path.join(pipeline_dir, "model-ei-fm.eipm"),
                 "--observations", obs_path] + TINY, pipeline_dir)
    assert r.returncode == 0, r.stderr
    from eipkit.datafiles import load_ensemble
    prior, samples, _ = load_ensemble(
        os.path.join(pipeline_dir, "recovered.eipr"))
    assert prior.gamma == 0.9
    assert samples.shape == (50, 2)
    assert np.isfinite(samples).all()


def test_sweep_csv_is_byte_deterministic(pipeline_dir):
    model = os.path.join(pipeline_dir, "model-ei-fm.eipm")
    r = run_cli(["sweep", "--model", model] + TINY, pipeline_dir)
    assert r.returncode == 0, r.stderr
    first = open(os.path.join(pipeline_dir, "sweep.csv"), "rb").read()
    r = run_cli(["sweep", "--model", model] + TINY, pipeline_dir)
    assert r.returncode == 0, r.stderr
    second = open(os.path.join(pipeline_dir, "sweep.csv"), "rb").read()
    assert first == second
    header = first.decode().splitlines()[0]
    assert header == "experiment,gamma,mu1,mu2,method,metric,value,n_samples,seed"


def test_nprime_study_inference_rows(pipeline_dir):
    model = os.path.join(pipeline_dir, "model-ei-fm.eipm")
    r = run_cli(["nprime-study", "--model", model,
                 "--set", "eval.nprime_list=10,50,200",
                 "--set", "eval.nprime_reps=2"] + TINY, pipeline_dir)
    assert r.returncode == 0, r.stderr
    rows = open(os.path.join(pipeline_dir, "nprime.csv")).read().splitlines()
    experiments = [line.split(",")[0] for line in rows[1:]]
    assert experiments == ["nprime-10", "nprime-50", "nprime-200"]
    values = [float(line.split(",")[6]) for line in rows[1:]]
    assert all(np.isfinite(v) for v in values)


def test_tarp_self_test_mode(pipeline_dir):
    r = run_cli(["tarp", "--self-test",
                 "--set", "eval.tarp_pairs=60",
                 "--set", "eval.tarp_samples=40"], pipeline_dir)
    assert r.returncode == 0, r.stderr
    lines = open(os.path.join(pipeline_dir, "tarp.csv")).read().splitlines()
    assert lines[0] == "method,metric,credibility,value"
    assert any(",deviation," in ln for ln in lines)


def test_unknown_config_key_is_exit_2(tmp_path):
    r = run_cli(["gen-data", "--set", "data.n_pairs=10"], str(tmp_path))
    assert r.returncode == 2
    assert r.stderr.startswith("error: config:")
    assert len(r.stderr.strip().splitlines()) == 1


def test_missing_corpus_is_exit_3(tmp_path):
    r = run_cli(["train", "--corpus", str(tmp_path / "nope.eipc")],
                str(tmp_path))
    assert r.returncode == 3
    assert r.stderr.startswith("error: io:")


def test_corrupt_observation_file_is_exit_3(pipeline_dir, tmp_path):
    bad = tmp_path / "bad.eipd"
    bad.write_bytes(b"not a dataset")
    r = run_cli(["recover", "--model",
                 os.path.join(pipeline_dir, "model-ei-fm.eipm"),
                 "--observations", str(bad)], pipeline_dir)
    assert r.returncode == 3
    assert r.stderr.startswith("error: io:")


def test_unknown_subcommand_is_exit_2(tmp_path):
    r = run_cli(["transmogrify"], str(tmp_path))
    assert r.returncode == 2


def test_numeric_failure_is_exit_4(tmp_path):
    outdir = str(tmp_path)
    r = run_cli(["gen-data", "--set", "data.n_per=100"], outdir)
    assert r.returncode == 0, r.stderr
    r = run_cli(["train",
                 "--set", "data.n_per=100",
                 "--set", "train.n_subset=100",
                 "--set", "train.batch=16",
                 "--set", "train.steps=400",
                 "--set", "train.optimizer=sgd",
                 "--set", "train.lr=1e18"], outdir)
    assert r.returncode == 4
    assert r.stderr.startswith("error: numeric:")
    report = os.path.join(outdir, "numeric-failure.json")
    assert os.path.exists(report)
    assert json.load(open(report))["step"] >= 1


def test_output_root_env_var(tmp_path):
    root = str(tmp_path / "root")
    r = subprocess.run(
        [sys.executable, "-m", "eipkit.cli", "gen-data",
         "--set", "run.output_dir=exp", "--set", "data.n_per=30"],
        capture_output=True, text=True,
        env={**os.environ, "EIPKIT_OUTPUT_ROOT": root})
    assert r.returncode == 0, r.stderr
    assert os.path.exists(os.path.join(root, "exp", "corpus.eipc"))


def test_sweep_plot_outputs(pipeline_dir, tmp_path):
    model = os.path.join(pipeline_dir, "model-ei-fm.eipm")
    plotdir = str(tmp_path / "plotdat")
    svg = str(tmp_path / "chart.svg")
    r = run_cli(["sweep", "--model", model, "--plot-data", plotdir,
                 "--svg", svg] + TINY, pipeline_dir)
    assert r.returncode == 0, r.stderr
    assert os.path.exists(os.path.join(plotdir, "ei-fm.dat"))
    assert open(svg).read().startswith("<svg")


def test_run_manifest_contents(pipeline_dir):
    manifest = json.load(open(os.path.join(pipeline_dir,
                                           "train.manifest.json")))
    assert manifest["command"] == "train"
    assert "config_hash" in manifest and len(manifest["config_hash"]) == 64
    assert manifest["duration_s"] > 0
    for artifact in manifest["artifacts"]:
        assert os.path.isabs(artifact)
