"""Binary model checkpoints: magic, version, embedded config, named tensors.

Layout (all integers little-endian):

    "ESGB" | u32 version | u32 meta_len | meta JSON (utf-8)
    | u32 tensor_count | tensor records...

Tensor record: u32 name_len | name utf-8 | u8 dtype (0 = float32)
| u8 rank | u32 dims... | raw little-endian payload.

Payloads are 32-bit floats; loading a saved float32 ParameterSet
reproduces every tensor bit-exactly.  Magic and version are rejected
before any tensor is read.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    CorruptCheckpoint,
    NotACheckpoint,
    UnsupportedVersion,
)
from .model import ModelConfig, ParameterSet, parameter_shapes

MAGIC = b"ESGB"
FORMAT_VERSION = 1
_DTYPES = {0: np.dtype("<f4")}
_DTYPE_CODE = 0

STAGES = ("pretrained", "finetuned_a", "finetuned_b", "fresh")


@dataclass
class CheckpointMeta:
    stage: str
    seed: int
    train_config: dict | None = None

    def to_dict(self) -> dict:
        return {"stage": self.stage, "seed": self.seed,
                "train_config": self.train_config}


def _config_to_dict(config: ModelConfig) -> dict:
    return {
        "vocab_size": config.vocab_size,
        "hidden_dim": config.hidden_dim,
        "num_layers": config.num_layers,
        "num_heads": config.num_heads,
        "ffn_dim": config.ffn_dim,
        "max_seq_len": config.max_seq_len,
        "dropout_rate": config.dropout_rate,
    }


def save_checkpoint(
    params: ParameterSet,
    config: ModelConfig,
    meta: CheckpointMeta,
    path,
) -> None:
    """Write params as float32 tensor records with embedded metadata."""
    doc = {"model_config": _config_to_dict(config), **meta.to_dict()}
    meta_bytes = json.dumps(doc, sort_keys=True).encode("utf-8")
    names = list(parameter_shapes(config))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(names)))
        for name in names:
            tensor = np.ascontiguousarray(params[name], dtype="<f4")
            name_bytes = name.encode("utf-8")
            fh.write(struct.pack("<I", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<BB", _DTYPE_CODE, tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            fh.write(tensor.tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CorruptCheckpoint(f"truncated while reading {what}")
    return data


def load_checkpoint(path) -> tuple[ParameterSet, ModelConfig, CheckpointMeta]:
    """Read and validate a checkpoint; shapes are checked against the config."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise NotACheckpoint(f"{path}: bad magic {magic!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version > FORMAT_VERSION:
            raise UnsupportedVersion(
                f"{path}: format version {version} > supported {FORMAT_VERSION}"
            )
        (meta_len,) = struct.unpack("<I", _read_exact(fh, 4, "meta length"))
        try:
            doc = json.loads(_read_exact(fh, meta_len, "metadata").decode("utf-8"))
            config = ModelConfig(**doc["model_config"])
            meta = CheckpointMeta(
                stage=doc["stage"], seed=doc["seed"],
                train_config=doc.get("train_config"),
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise CorruptCheckpoint(f"{path}: bad metadata: {exc}") from None

        (count,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4, "name length"))
            name = _read_exact(fh, name_len, "tensor name").decode("utf-8")
            dtype_code, rank = struct.unpack("<BB", _read_exact(fh, 2, "dtype/rank"))
            if dtype_code not in _DTYPES:
                raise CorruptCheckpoint(f"{path}: unknown dtype {dtype_code}")
            dims = struct.unpack(
                f"<{rank}I", _read_exact(fh, 4 * rank, "dims")
            )
            dtype = _DTYPES[dtype_code]
            n_bytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
            payload = _read_exact(fh, n_bytes, f"payload of {name}")
            tensors[name] = np.frombuffer(payload, dtype=dtype).reshape(dims).copy()
        if fh.read(1):
            raise CorruptCheckpoint(f"{path}: trailing bytes after tensors")

    expected = parameter_shapes(config)
    if set(tensors) != set(expected):
        raise CorruptCheckpoint(
            f"{path}: tensor names do not match the embedded config"
        )
    for name, shape in expected.items():
        if tensors[name].shape != shape:
            raise CorruptCheckpoint(
                f"{path}: {name} has shape {tensors[name].shape}, "
                f"config implies {shape}"
            )
    return ParameterSet(tensors), config, meta
