"""Fixed-layout binary files with magic+version headers.

Four kinds share the same conventions (little-endian, 64-bit floats,
u32/u64 integers):

* ``EIPD``  truth/observation dataset from one prior
* ``EIPC``  corpus of datasets sharing one forward model
* ``EIPR``  recovered ensemble (samples for one target prior)
* ``EIPM``  model checkpoint (text descriptor + flat parameter array)

Every writer also emits a human-readable sidecar ``<path>.manifest.txt``
so files can be inspected without this module.  Writes are atomic
(temp file in the same directory, then rename).
"""

from __future__ import annotations

import io
import os
import struct
import tempfile

import numpy as np

from .errors import DataFormatError
from .synthetic import (
    GAUSS2D,
    GAUSS2D_3PARAM,
    Corpus,
    ForwardSpec,
    PairDataset,
    PriorSpec,
)

FORMAT_VERSION = 1

MAGIC_DATASET = b"EIPD"
MAGIC_CORPUS = b"EIPC"
MAGIC_ENSEMBLE = b"EIPR"
MAGIC_MODEL = b"EIPM"

_FAMILY_CODES = {GAUSS2D: 1, GAUSS2D_3PARAM: 2}
_FAMILY_NAMES = {v: k for k, v in _FAMILY_CODES.items()}


def atomic_write_bytes(path, data: bytes) -> None:
    """Write ``data`` to ``path`` via a same-directory temp file + rename."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def manifest_path(path) -> str:
    return os.fspath(path) + ".manifest.txt"


def write_manifest(path, entries: dict) -> None:
    lines = [f"{key}: {value}" for key, value in entries.items()]
    atomic_write_text(manifest_path(path), "\n".join(lines) + "\n")


def _read_exact(f, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise DataFormatError(f"truncated file: wanted {n} bytes, got {len(data)}")
    return data


def _read_struct(f, fmt: str):
    return struct.unpack(fmt, _read_exact(f, struct.calcsize(fmt)))


def _check_header(f, magic: bytes) -> int:
    got = _read_exact(f, 4)
    if got != magic:
        raise DataFormatError(
            f"bad magic: expected {magic.decode()}, got {got!r}"
        )
    (version,) = _read_struct(f, "<I")
    if version != FORMAT_VERSION:
        raise DataFormatError(f"unsupported {magic.decode()} version {version}")
    return version


def _write_prior(buf, spec: PriorSpec) -> None:
    buf.write(struct.pack("<I", _FAMILY_CODES[spec.family]))
    buf.write(struct.pack("<4d", spec.gamma, spec.mu1, spec.mu2, spec.gamma1))


def _read_prior(f) -> PriorSpec:
    (code,) = _read_struct(f, "<I")
    if code not in _FAMILY_NAMES:
        raise DataFormatError(f"unknown prior family code {code}")
    gamma, mu1, mu2, gamma1 = _read_struct(f, "<4d")
    return PriorSpec(
        family=_FAMILY_NAMES[code], gamma=gamma, mu1=mu1, mu2=mu2, gamma1=gamma1
    )


def _write_dataset_block(buf, ds: PairDataset) -> None:
    buf.write(MAGIC_DATASET)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    buf.write(struct.pack("<I", ds.d))
    buf.write(struct.pack("<Q", len(ds)))
    _write_prior(buf, ds.prior)
    records = np.hstack([ds.x, ds.y]).astype("<f8")
    buf.write(records.tobytes(order="C"))


def _read_dataset_block(f) -> PairDataset:
    _check_header(f, MAGIC_DATASET)
    (d,) = _read_struct(f, "<I")
    (n,) = _read_struct(f, "<Q")
    if d < 1 or n < 1:
        raise DataFormatError(f"invalid dataset dimensions d={d}, n={n}")
    prior = _read_prior(f)
    raw = _read_exact(f, 8 * n * 2 * d)
    records = np.frombuffer(raw, dtype="<f8").reshape(n, 2 * d)
    return PairDataset(prior=prior, x=records[:, :d].copy(), y=records[:, d:].copy())


def _dataset_manifest(ds: PairDataset) -> dict:
    return {
        "kind": "dataset",
        "version": FORMAT_VERSION,
        "d": ds.d,
        "n": len(ds),
        "prior": ds.prior.label(),
        "family": ds.prior.family,
    }


def save_dataset(path, ds: PairDataset) -> None:
    buf = io.BytesIO()
    _write_dataset_block(buf, ds)
    atomic_write_bytes(path, buf.getvalue())
    write_manifest(path, _dataset_manifest(ds))


def load_dataset(path) -> PairDataset:
    with open(path, "rb") as f:
        ds = _read_dataset_block(f)
        if f.read(1):
            raise DataFormatError("trailing bytes after dataset block")
    return ds


def save_corpus(path, corpus: Corpus) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC_CORPUS)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    buf.write(struct.pack("<I", len(corpus)))
    a = corpus.forward.a
    buf.write(struct.pack("<4d", a[0, 0], a[0, 1], a[1, 0], a[1, 1]))
    buf.write(
        struct.pack(
            "<2d", corpus.forward.noise_mean_scale, corpus.forward.noise_var_scale
        )
    )
    buf.write(struct.pack("<Q", corpus.seed))
    for ds in corpus.datasets:
        _write_dataset_block(buf, ds)
    atomic_write_bytes(path, buf.getvalue())

    entries = {
        "kind": "corpus",
        "version": FORMAT_VERSION,
        "m": len(corpus),
        "d": corpus.d,
        "n_total": sum(len(ds) for ds in corpus.datasets),
        "forward_matrix": corpus.forward.matrix,
        "noise_mean_scale": corpus.forward.noise_mean_scale,
        "noise_var_scale": corpus.forward.noise_var_scale,
        "seed": corpus.seed,
    }
    for idx, ds in enumerate(corpus.datasets):
        entries[f"dataset.{idx}"] = f"n={len(ds)} {ds.prior.label()}"
    write_manifest(path, entries)


def load_corpus(path) -> Corpus:
    with open(path, "rb") as f:
        _check_header(f, MAGIC_CORPUS)
        (m,) = _read_struct(f, "<I")
        if m < 1:
            raise DataFormatError("corpus contains no datasets")
        a00, a01, a10, a11 = _read_struct(f, "<4d")
        mean_scale, var_scale = _read_struct(f, "<2d")
        (seed,) = _read_struct(f, "<Q")
        fwd = ForwardSpec(
            matrix=((a00, a01), (a10, a11)),
            noise_mean_scale=mean_scale,
            noise_var_scale=var_scale,
        )
        datasets = [_read_dataset_block(f) for _ in range(m)]
        if f.read(1):
            raise DataFormatError("trailing bytes after corpus blocks")
    return Corpus(datasets=datasets, forward=fwd, seed=seed)


def save_ensemble(path, prior: PriorSpec, samples: np.ndarray, seed: int,
                  method: str = "") -> None:
    """Recovered ensemble: samples drawn for one target prior."""
    samples = np.ascontiguousarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[0] < 1:
        raise ValueError("samples must be a non-empty (n, d) array")
    buf = io.BytesIO()
    buf.write(MAGIC_ENSEMBLE)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    buf.write(struct.pack("<I", samples.shape[1]))
    buf.write(struct.pack("<Q", samples.shape[0]))
    _write_prior(buf, prior)
    buf.write(struct.pack("<Q", seed))
    buf.write(samples.astype("<f8").tobytes(order="C"))
    atomic_write_bytes(path, buf.getvalue())
    write_manifest(path, {
        "kind": "ensemble",
        "version": FORMAT_VERSION,
        "d": samples.shape[1],
        "n": samples.shape[0],
        "prior": prior.label(),
        "seed": seed,
        "method": method or "unspecified",
    })


def load_ensemble(path):
    with open(path, "rb") as f:
        _check_header(f, MAGIC_ENSEMBLE)
        (d,) = _read_struct(f, "<I")
        (n,) = _read_struct(f, "<Q")
        if d < 1 or n < 1:
            raise DataFormatError(f"invalid ensemble dimensions d={d}, n={n}")
        prior = _read_prior(f)
        (seed,) = _read_struct(f, "<Q")
        raw = _read_exact(f, 8 * n * d)
        samples = np.frombuffer(raw, dtype="<f8").reshape(n, d).copy()
        if f.read(1):
            raise DataFormatError("trailing bytes after ensemble block")
    return prior, samples, seed


def save_model_file(path, meta: dict, params: dict) -> None:
    """Checkpoint: text descriptor, then every array raveled in order.

    ``meta`` values are formatted with repr so floats round-trip
    exactly.  The descriptor records each parameter's name and shape in
    the traversal order used for the flat array (insertion order of
    ``params``).
    """
    lines = [f"{key}: {value!r}" for key, value in meta.items()]
    for name, arr in params.items():
        lines.append(f"param.{name}: {tuple(np.asarray(arr).shape)!r}")
    descriptor = ("\n".join(lines) + "\n").encode("utf-8")

    flat = np.concatenate(
        [np.asarray(arr, dtype=np.float64).ravel(order="C") for arr in params.values()]
    ) if params else np.zeros(0)

    buf = io.BytesIO()
    buf.write(MAGIC_MODEL)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    buf.write(struct.pack("<Q", len(descriptor)))
    buf.write(descriptor)
    buf.write(struct.pack("<Q", flat.size))
    buf.write(flat.astype("<f8").tobytes(order="C"))
    atomic_write_bytes(path, buf.getvalue())

    entries = {"kind": "model", "version": FORMAT_VERSION,
               "n_parameters": int(flat.size)}
    entries.update(meta)
    write_manifest(path, entries)


def load_model_file(path):
    """Inverse of save_model_file: returns (meta, params).

    Meta values come back as Python literals (via repr round-trip).
    """
    import ast

    with open(path, "rb") as f:
        _check_header(f, MAGIC_MODEL)
        (desc_len,) = _read_struct(f, "<Q")
        descriptor = _read_exact(f, desc_len).decode("utf-8")
        (count,) = _read_struct(f, "<Q")
        raw = _read_exact(f, 8 * count)
        flat = np.frombuffer(raw, dtype="<f8")
        if f.read(1):
            raise DataFormatError("trailing bytes after parameter array")

    meta = {}
    shapes = []
    for line in descriptor.splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition(": ")
        if not _:
            raise DataFormatError(f"malformed descriptor line: {line!r}")
        try:
            parsed = ast.literal_eval(value)
        except (ValueError, SyntaxError) as exc:
            raise DataFormatError(f"bad descriptor value for {key!r}") from exc
        if key.startswith("param."):
            shapes.append((key[len("param."):], parsed))
        else:
            meta[key] = parsed

    params = {}
    offset = 0
    for name, shape in shapes:
        size = int(np.prod(shape)) if shape else 1
        if offset + size > flat.size:
            raise DataFormatError("parameter array shorter than descriptor claims")
        params[name] = flat[offset:offset + size].reshape(shape).copy()
        offset += size
    if offset != flat.size:
        raise DataFormatError("parameter array longer than descriptor claims")
    return meta, params


def sniff_magic(path) -> str:
    with open(path, "rb") as f:
        return _read_exact(f, 4).decode("ascii", errors="replace")
