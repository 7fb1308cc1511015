import os

import numpy as np
import pytest

from eipkit.datafiles import (
    atomic_write_bytes,
    load_corpus,
    load_dataset,
    load_ensemble,
    load_model_file,
    manifest_path,
    save_corpus,
    save_dataset,
    save_ensemble,
    save_model_file,
    sniff_magic,
)
from eipkit.errors import DataFormatError
from eipkit.rng import child_rng
from eipkit.synthetic import GAUSS2D_3PARAM, PriorSpec, make_pair_dataset


def test_dataset_roundtrip(tmp_path, pair_batch):
    path = str(tmp_path / "d.eipd")
    save_dataset(path, pair_batch)
    back = load_dataset(path)
    assert np.array_equal(back.x, pair_batch.x)
    assert np.array_equal(back.y, pair_batch.y)
    assert back.prior == pair_batch.prior
    assert sniff_magic(path) == "EIPD"


def test_dataset_manifest_written(tmp_path, pair_batch):
    path = str(tmp_path / "d.eipd")
    save_dataset(path, pair_batch)
    side = manifest_path(path)
    assert os.path.exists(side)
    text = open(side).read()
    assert "kind: dataset" in text
    assert "n: 48" in text


def test_three_param_prior_roundtrip(tmp_path, forward):
    prior = PriorSpec(family=GAUSS2D_3PARAM, mu1=-1.5, mu2=0.5, gamma1=0.75)
    ds = make_pair_dataset(prior, forward, 8, child_rng(0, "rt"))
    path = str(tmp_path / "d3.eipd")
    save_dataset(path, ds)
    assert load_dataset(path).prior == prior


def test_corpus_roundtrip(tmp_path, tiny_corpus):
    path = str(tmp_path / "c.eipc")
    save_corpus(path, tiny_corpus)
    back = load_corpus(path)
    assert back.seed == tiny_corpus.seed
    assert len(back.datasets) == len(tiny_corpus.datasets)
    for a, b in zip(back.datasets, tiny_corpus.datasets):
        assert a.prior == b.prior
        assert np.array_equal(a.x, b.x)
        assert np.array_equal(a.y, b.y)
    assert np.array_equal(back.forward.a, tiny_corpus.forward.a)


def test_ensemble_roundtrip(tmp_path):
    samples = child_rng(3, "ens").standard_normal((64, 2))
    path = str(tmp_path / "e.eipr")
    save_ensemble(path, PriorSpec(gamma=0.9), samples, 555, method="ei-fm")
    prior, back, seed = load_ensemble(path)
    assert prior.gamma == 0.9
    assert seed == 555
    assert np.array_equal(back, samples)


def test_model_file_roundtrip(tmp_path):
    params = {
        "w": child_rng(1, "m").standard_normal((4, 3)),
        "b": np.zeros(4),
    }
    meta = {"kind": "fm", "d": 2, "note": "round trip"}
    path = str(tmp_path / "m.eipm")
    save_model_file(path, meta, params)
    back_meta, back_params = load_model_file(path)
    assert back_meta["kind"] == "fm" and back_meta["d"] == 2
    assert set(back_params) == {"w", "b"}
    assert np.array_equal(back_params["w"], params["w"])


def test_truncated_file_raises(tmp_path, pair_batch):
    path = str(tmp_path / "d.eipd")
    save_dataset(path, pair_batch)
    blob = open(path, "rb").read()
    open(path, "wb").write(blob[:-16])
    with pytest.raises(DataFormatError):
        load_dataset(path)


def test_trailing_garbage_raises(tmp_path, pair_batch):
    path = str(tmp_path / "d.eipd")
    save_dataset(path, pair_batch)
    with open(path, "ab") as fh:
        fh.write(b"\x00" * 8)
    with pytest.raises(DataFormatError):
        load_dataset(path)


def test_wrong_magic_raises(tmp_path, pair_batch):
    path = str(tmp_path / "d.eipd")
    save_dataset(path, pair_batch)
    with pytest.raises(DataFormatError):
        load_ensemble(path)


def test_bad_version_raises(tmp_path, pair_batch):
    path = str(tmp_path / "d.eipd")
    save_dataset(path, pair_batch)
    blob = bytearray(open(path, "rb").read())
    blob[4:8] = (99).to_bytes(4, "little")
    open(path, "wb").write(bytes(blob))
    with pytest.raises(DataFormatError):
        load_dataset(path)


def test_atomic_write_replaces_whole_file(tmp_path):
    path = str(tmp_path / "x.bin")
    atomic_write_bytes(path, b"first version")
    atomic_write_bytes(path, b"2nd")
    assert open(path, "rb").read() == b"2nd"
    assert [p for p in os.listdir(tmp_path)
            if p.startswith(".") or p.endswith(".tmp")] == []
