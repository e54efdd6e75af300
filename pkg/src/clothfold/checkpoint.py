"""Versioned binary checkpoint container.

Layout: 4 magic bytes, a uint32 format version, a uint64 header length, a
JSON header (model config echo, named tensor table, optional optimizer
state, metadata), then raw little-endian float64 tensor payloads. The named
tensor table covers the model's full parameter census (frozen towers
included), so externally converted weights can be loaded by name.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .perception.config import ModelConfig
from .perception.model import PerceptionModel

MAGIC = b"CFCK"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


@dataclass
class Checkpoint:
    format_version: int
    model_config: dict
    tensors: dict[str, np.ndarray]
    optimizer: Optional[dict] = None          # {"t": int, "m": {...}, "v": {...}}
    metadata: dict = field(default_factory=dict)


def _tensor_blobs(named: dict[str, np.ndarray]) -> tuple[dict, bytes]:
    table = {}
    payload = bytearray()
    for name in sorted(named):
        arr = np.ascontiguousarray(named[name], dtype="<f8")
        table[name] = {"shape": list(arr.shape), "offset": len(payload),
                       "nbytes": arr.nbytes}
        payload.extend(arr.tobytes())
    return table, bytes(payload)


def save_checkpoint(path, model: PerceptionModel,
                    optimizer: Optional[ad.Adam] = None,
                    metadata: Optional[dict] = None) -> None:
    named = {name: t.data for name, t in model.named_parameters().items()}
    table, payload = _tensor_blobs(named)

    optim_header = None
    optim_payload = b""
    if optimizer is not None:
        by_id = {id(t): name for name, t in model.named_parameters().items()}
        moments = {}
        for p in optimizer.params:
            name = by_id.get(id(p))
            if name is None:
                raise CheckpointError("optimizer tracks a tensor outside the model")
            st = optimizer.state[id(p)]
            moments[f"optim.m.{name}"] = st.m
            moments[f"optim.v.{name}"] = st.v
        optim_table, optim_payload = _tensor_blobs(moments)
        for rec in optim_table.values():
            rec["offset"] += len(payload)
        optim_header = {"t": optimizer.t, "lr": optimizer.lr,
                        "beta1": optimizer.beta1, "beta2": optimizer.beta2,
                        "epsilon": optimizer.epsilon, "tensors": optim_table}

    header = {
        "format_version": FORMAT_VERSION,
        "model_config": model.cfg.to_record(),
        "tensors": table,
        "optimizer": optim_header,
        "metadata": metadata or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        f.write(payload)
        f.write(optim_payload)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {version}, "
                              f"expected {FORMAT_VERSION}")
    (header_len,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16:16 + header_len].decode("utf-8"))
    body = blob[16 + header_len:]

    def read_table(table: dict) -> dict[str, np.ndarray]:
        out = {}
        for name, rec in table.items():
            start, nbytes = rec["offset"], rec["nbytes"]
            if start + nbytes > len(body):
                raise CheckpointError(f"{path}: truncated payload for {name!r}")
            arr = np.frombuffer(body[start:start + nbytes], dtype="<f8")
            out[name] = arr.reshape(rec["shape"]).copy()
        return out

    tensors = read_table(header["tensors"])
    optimizer = None
    if header.get("optimizer"):
        oh = header["optimizer"]
        moments = read_table(oh["tensors"])
        optimizer = {"t": oh["t"], "lr": oh["lr"], "beta1": oh["beta1"],
                     "beta2": oh["beta2"], "epsilon": oh["epsilon"],
                     "moments": moments}
    return Checkpoint(version, header["model_config"], tensors, optimizer,
                      header.get("metadata", {}))


def load_into_model(ckpt: Checkpoint, model: PerceptionModel,
                    require_config_match: bool = True) -> None:
    """Copy checkpoint tensors into the model, by name, shape-checked."""
    if require_config_match and ckpt.model_config != model.cfg.to_record():
        raise CheckpointError("checkpoint model config does not match the model; "
                              f"checkpoint: {ckpt.model_config}")
    named = model.named_parameters()
    missing = sorted(set(named) - set(ckpt.tensors))
    unknown = sorted(set(ckpt.tensors) - set(named))
    if missing or unknown:
        raise CheckpointError(f"tensor name mismatch; missing: {missing[:4]}, "
                              f"unknown: {unknown[:4]}")
    for name, tensor in named.items():
        src = ckpt.tensors[name]
        if src.shape != tensor.data.shape:
            raise CheckpointError(f"tensor {name!r}: checkpoint shape "
                                  f"{src.shape} != model shape {tensor.data.shape}")
        tensor.data[:] = src


def restore_optimizer(ckpt: Checkpoint, model: PerceptionModel) -> ad.Adam:
    if ckpt.optimizer is None:
        raise CheckpointError("checkpoint carries no optimizer state")
    o = ckpt.optimizer
    named = model.trainable_parameters()
    opt = ad.Adam(list(named.values()), lr=o["lr"], beta1=o["beta1"],
                  beta2=o["beta2"], epsilon=o["epsilon"])
    opt.t = o["t"]
    for name, p in named.items():
        st = opt.state[id(p)]
        st.m = o["moments"][f"optim.m.{name}"].copy()
        st.v = o["moments"][f"optim.v.{name}"].copy()
    return opt


def model_from_checkpoint(ckpt: Checkpoint) -> PerceptionModel:
    model = PerceptionModel(ModelConfig.from_record(ckpt.model_config))
    load_into_model(ckpt, model)
    return model
