"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"BLNN"                 magic
    uint32                  format version (1)
    uint32                  header length in bytes
    header                  UTF-8 JSON, sorted keys: input_dim, hidden_dim,
                            params [[name, shape], ...], feature_stats, metadata
    float64[...]            weights, little-endian, row-major, in ``params`` order

Parameter order: for each of layer1_fwd, layer1_bwd, layer2_fwd,
layer2_bwd the stacked W, U, b (gate blocks r, s, f, l), then fc.W, fc.b.
"""
from __future__ import annotations

import json
import os
import struct

import numpy as np

from ..errors import CheckpointError
from .features import FeatureStats
from .lstm import LstmLayerParams
from .network import LAYERS, LstmModel

MAGIC = b"BLNN"
VERSION = 1


class CheckpointVersionError(CheckpointError):
    pass


def to_bytes(model: LstmModel) -> bytes:
    params = model.parameters()
    header = {
        "input_dim": model.input_dim,
        "hidden_dim": model.hidden_dim,
        "params": [[k, list(v.shape)] for k, v in params.items()],
        "feature_stats": {"mean": model.feature_stats.mean, "std": model.feature_stats.std},
        "metadata": model.metadata,
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for v in params.values())
    return MAGIC + struct.pack("<II", VERSION, len(hb)) + hb + body


def from_bytes(data: bytes) -> LstmModel:
    if len(data) < 12 or data[:4] != MAGIC:
        raise CheckpointVersionError("not a BLNN checkpoint (bad magic)")
    version, hlen = struct.unpack("<II", data[4:12])
    if version != VERSION:
        raise CheckpointVersionError(f"unsupported checkpoint version {version}, expected {VERSION}")
    if len(data) < 12 + hlen:
        raise CheckpointError("checkpoint truncated inside header")
    try:
        header = json.loads(data[12:12 + hlen].decode())
        specs = [(name, tuple(shape)) for name, shape in header["params"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    expected = [f"{n}.{k}" for n in LAYERS for k in ("W", "U", "b")] + ["fc.W", "fc.b"]
    if [n for n, _ in specs] != expected:
        raise CheckpointError("checkpoint parameter list does not match the network layout")
    body = memoryview(data)[12 + hlen:]
    need = sum(int(np.prod(s)) for _, s in specs) * 8
    if len(body) != need:
        raise CheckpointError(f"checkpoint body has {len(body)} bytes, expected {need}")
    arrays, off = {}, 0
    for name, shape in specs:
        n = int(np.prod(shape)) * 8
        arrays[name] = np.frombuffer(body[off:off + n], dtype="<f8").astype(float).reshape(shape)
        off += n
    layers = [LstmLayerParams(arrays[f"{n}.W"], arrays[f"{n}.U"], arrays[f"{n}.b"]) for n in LAYERS]
    fs = header.get("feature_stats", {})
    return LstmModel(*layers, arrays["fc.W"], arrays["fc.b"],
                     FeatureStats(fs.get("mean", 0.0), fs.get("std", 1.0)),
                     header.get("metadata", {}))


def save_checkpoint(model: LstmModel, destination) -> None:
    data = to_bytes(model)
    with open(os.fspath(destination), "wb") as fh:
        fh.write(data)


def load_checkpoint(source) -> LstmModel:
    with open(os.fspath(source), "rb") as fh:
        return from_bytes(fh.read())
