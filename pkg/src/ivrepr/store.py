"""Versioned binary container of named float64 matrices, plus CSV export.

Layout (little endian):
    b"IVRB" | u16 version | u32 meta_len | meta (UTF-8 JSON) | u32 count
    count x ( u16 name_len | name | u32 rows | u32 cols | rows*cols float64 )
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .dgp import Dataset, Dims, Hidden, NoiseScales, SemParams, Variant
from .irae import IraeModel
from .lirr import LinearReprModel
from .ndcore.layers import RffLayer

MAGIC = b"IVRB"
VERSION = 1


class ContainerError(ValueError):
    pass


def encode_container(matrices: dict[str, np.ndarray], meta: dict | None = None) -> bytes:
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<HI", VERSION, len(meta_bytes)), meta_bytes, struct.pack("<I", len(matrices))]
    for name, arr in matrices.items():
        a = np.asarray(arr, dtype="<f8")
        if a.ndim == 1:
            a = a.reshape(-1, 1)
        if a.ndim != 2:
            raise ContainerError(f"{name}: only 1-D or 2-D arrays can be stored")
        raw = name.encode("utf-8")
        parts += [struct.pack("<H", len(raw)), raw, struct.pack("<II", *a.shape), np.ascontiguousarray(a).tobytes()]
    return b"".join(parts)


def decode_container(blob: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if blob[:4] != MAGIC:
        raise ContainerError("not an IVRB container")
    version, meta_len = struct.unpack_from("<HI", blob, 4)
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    pos = 10
    meta = json.loads(blob[pos : pos + meta_len].decode("utf-8"))
    pos += meta_len
    (count,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    out = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos : pos + nlen].decode("utf-8")
        pos += nlen
        rows, cols = struct.unpack_from("<II", blob, pos)
        pos += 8
        size = rows * cols * 8
        if pos + size > len(blob):
            raise ContainerError(f"truncated matrix {name!r}")
        out[name] = np.frombuffer(blob[pos : pos + size], dtype="<f8").reshape(rows, cols).astype(float)
        pos += size
    return out, meta


def write_container(path, matrices: dict[str, np.ndarray], meta: dict | None = None) -> str:
    """Write and return the SHA-256 of the bytes written."""
    blob = encode_container(matrices, meta)
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def read_container(path) -> tuple[dict[str, np.ndarray], dict]:
    return decode_container(Path(path).read_bytes())


# ---------------------------------------------------------------- datasets


def dataset_matrices(params: SemParams, data: Dataset, with_hidden: bool = True) -> dict[str, np.ndarray]:
    mats = {"Z": data.Z, "X": data.X, "Y": data.Y.reshape(-1, 1)}
    if with_hidden:
        h = data.hidden
        mats.update({"hidden_D": h.D, "hidden_U": h.U, "hidden_V": h.V, "hidden_eta": h.eta.reshape(-1, 1)})
    mats.update({"param_A": params.A, "param_B": params.B, "param_theta": params.theta.reshape(-1, 1)})
    if params.E is not None:
        mats["param_E"] = params.E
    if params.F is not None:
        mats["param_F"] = params.F
    return mats


def dataset_meta(params: SemParams, data: Dataset) -> dict:
    return {
        "kind": "dataset",
        "variant": params.variant.value,
        "dims": asdict(params.dims),
        "noise": asdict(params.noise),
        "seed": data.seed,
    }


def save_dataset(path, params: SemParams, data: Dataset, with_hidden: bool = True) -> str:
    return write_container(path, dataset_matrices(params, data, with_hidden), dataset_meta(params, data))


def load_dataset(path) -> tuple[SemParams, Dataset]:
    mats, meta = read_container(path)
    if meta.get("kind") != "dataset":
        raise ContainerError(f"{path} does not hold a dataset")
    params = SemParams(
        Variant(meta["variant"]),
        Dims(**meta["dims"]),
        NoiseScales(**meta["noise"]),
        mats["param_A"],
        mats["param_B"],
        mats["param_theta"][:, 0],
        mats.get("param_E"),
        mats.get("param_F"),
    )
    n = mats["Z"].shape[0]
    empty = np.full((n, 0), np.nan)
    hidden = Hidden(
        mats.get("hidden_D", empty),
        mats.get("hidden_U", empty),
        mats.get("hidden_V", empty),
        mats["hidden_eta"][:, 0] if "hidden_eta" in mats else np.full(n, np.nan),
    )
    return params, Dataset(mats["Z"], mats["X"], mats["Y"][:, 0], hidden, int(meta["seed"]))


def write_dataset_csv(path, data: Dataset, with_hidden: bool = False) -> None:
    cols = [data.Z, data.X, data.Y.reshape(-1, 1)]
    header = [f"z_{i}" for i in range(data.Z.shape[1])] + [f"x_{i}" for i in range(data.X.shape[1])] + ["y"]
    if with_hidden:
        h = data.hidden
        for prefix, arr in (("hidden_d", h.D), ("hidden_u", h.U), ("hidden_v", h.V)):
            cols.append(arr)
            header += [f"{prefix}_{i}" for i in range(arr.shape[1])]
        cols.append(h.eta.reshape(-1, 1))
        header.append("hidden_eta")
    table = np.concatenate(cols, axis=1)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in table:
            w.writerow([repr(float(v)) for v in row])


# ------------------------------------------------------------------ models


def save_linear_model(path, model: LinearReprModel) -> str:
    mats = {
        "basis": model.basis,
        "loading": model.loading,
        "theta": model.theta.reshape(-1, 1),
        "singular_values": model.singular_values.reshape(-1, 1),
        "x_mean": model.x_mean.reshape(1, -1),
    }
    meta = {"kind": "linear_model", "method": model.method, "intercept": model.intercept}
    return write_container(path, mats, meta)


def load_linear_model(path) -> LinearReprModel:
    mats, meta = read_container(path)
    if meta.get("kind") != "linear_model":
        raise ContainerError(f"{path} does not hold a linear model")
    return LinearReprModel(
        mats["basis"],
        mats["loading"],
        mats["theta"][:, 0],
        float(meta["intercept"]),
        mats["singular_values"][:, 0],
        mats["x_mean"][0],
        meta["method"],
    )


def save_irae_model(path, model: IraeModel) -> str:
    mats = {f"param/{k}": v for k, v in model.params.items()}
    mats.update(
        {
            "rff_weight": model.rff.weight,
            "rff_phase": model.rff.phase.reshape(1, -1),
            "x_mean": model.x_mean,
            "x_scale": model.x_scale,
        }
    )
    meta = {
        "kind": "irae_model",
        "rff_bandwidth": model.rff.bandwidth,
        "n_encoder": model.n_encoder,
        "n_decoder": model.n_decoder,
        "r_d": model.r_d,
        "r_v": model.r_v,
        "activation": model.activation,
    }
    return write_container(path, mats, meta)


def load_irae_model(path) -> IraeModel:
    mats, meta = read_container(path)
    if meta.get("kind") != "irae_model":
        raise ContainerError(f"{path} does not hold an IRAE model")
    params = {k.split("/", 1)[1]: v for k, v in mats.items() if k.startswith("param/")}
    rff = RffLayer(mats["rff_weight"], mats["rff_phase"][0], float(meta["rff_bandwidth"]))
    return IraeModel(
        params,
        rff,
        mats["x_mean"],
        mats["x_scale"],
        int(meta["n_encoder"]),
        int(meta["n_decoder"]),
        int(meta["r_d"]),
        int(meta["r_v"]),
        meta["activation"],
    )
