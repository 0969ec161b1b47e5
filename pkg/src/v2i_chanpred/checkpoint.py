"""Versioned single-file checkpoint container.

Layout (all integers little-endian)::

    offset 0    8 bytes   magic b"V2ICKPT\\0"
    offset 8    uint32    format version (1)
    offset 12   uint64    header length N
    offset 20   N bytes   UTF-8 JSON header
    offset 20+N           tensor payload

The header holds the model and train config echo, the epoch counter, the best
validation record, the dataset manifest hash, the flattened optimizer state and
a tensor index of ``{name, dtype, shape, offset, nbytes}`` entries. Offsets are
relative to the payload start. Floating tensors are stored as ``<f4``, integer
buffers as ``<i8``, both in C order. Model tensors come first, named as in the
state dict; optimizer slots follow as ``optimizer.<param>.<slot>``.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass
from dataclasses import field
from pathlib import Path
from typing import TYPE_CHECKING
from typing import Any

import numpy as np
import torch

from v2i_chanpred.config import ModelConfig
from v2i_chanpred.config import TrainConfig
from v2i_chanpred.errors import CheckpointFormatError
from v2i_chanpred.errors import CheckpointNotFoundError
from v2i_chanpred.model import ChannelPredictor

if TYPE_CHECKING:
    from collections.abc import Mapping

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"V2ICKPT\0"
CHECKPOINT_VERSION = 1
PREAMBLE = struct.Struct("<8sIQ")
CHECKPOINT_NAME = "checkpoint"


@dataclass
class Checkpoint:
    model_config: ModelConfig
    train_config: TrainConfig
    state: dict[str, torch.Tensor]
    epoch: int = 0
    best: dict[str, float] = field(default_factory=dict)
    manifest_hash: str = ""
    optimizer_state: dict[str, Any] | None = None


def _flatten_optimizer(
    state: Mapping[str, Any],
) -> tuple[dict[str, Any], dict[str, torch.Tensor]]:
    tensors: dict[str, torch.Tensor] = {}
    entries: dict[str, dict[str, Any]] = {}
    for idx, slots in state["state"].items():
        entry: dict[str, Any] = {}
        for key, value in slots.items():
            if isinstance(value, torch.Tensor):
                name = f"optimizer.{idx}.{key}"
                tensors[name] = value
                entry[key] = {"tensor": name}
            else:
                entry[key] = value
        entries[str(idx)] = entry
    return {"state": entries, "param_groups": state["param_groups"]}, tensors


def _unflatten_optimizer(
    flat: Mapping[str, Any], tensors: Mapping[str, torch.Tensor]
) -> dict[str, Any]:
    state: dict[int, dict[str, Any]] = {}
    for idx, entry in flat["state"].items():
        state[int(idx)] = {
            key: tensors[value["tensor"]] if isinstance(value, dict) else value
            for key, value in entry.items()
        }
    return {"state": state, "param_groups": flat["param_groups"]}


def _tensor_bytes(tensor: torch.Tensor) -> tuple[str, bytes]:
    array = tensor.detach().cpu().numpy()
    dtype = "<f4" if np.issubdtype(array.dtype, np.floating) else "<i8"
    return dtype, np.ascontiguousarray(array, dtype=dtype).tobytes()


def save_checkpoint(
    path: Path,
    model: ChannelPredictor,
    train_config: TrainConfig,
    *,
    optimizer: torch.optim.Optimizer | None = None,
    epoch: int = 0,
    best: Mapping[str, float] | None = None,
    manifest_hash: str = "",
) -> Path:
    """Write ``model`` (and optionally ``optimizer``) to ``path`` atomically."""
    tensors: dict[str, torch.Tensor] = dict(model.state_dict())
    optim_header: dict[str, Any] | None = None
    if optimizer is not None:
        optim_header, optim_tensors = _flatten_optimizer(optimizer.state_dict())
        tensors.update(optim_tensors)

    index = []
    chunks = []
    offset = 0
    for name, tensor in tensors.items():
        dtype, raw = _tensor_bytes(tensor)
        index.append(
            {
                "name": name,
                "dtype": dtype,
                "shape": list(tensor.shape),
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        chunks.append(raw)
        offset += len(raw)

    header = {
        "model_config": model.config.model_dump(mode="json"),
        "train_config": train_config.model_dump(mode="json"),
        "epoch": epoch,
        "best": dict(best or {}),
        "manifest_hash": manifest_hash,
        "optimizer": optim_header,
        "tensors": index,
    }
    header_raw = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_suffix(".tmp")
    with tmp.open("wb") as fh:
        fh.write(PREAMBLE.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(header_raw)))
        fh.write(header_raw)
        for chunk in chunks:
            fh.write(chunk)
    tmp.replace(path)
    logger.debug("checkpoint written to %s (epoch %d)", path, epoch)
    return path


def _read_tensor(payload: bytes, entry: Mapping[str, Any]) -> torch.Tensor:
    start, nbytes = int(entry["offset"]), int(entry["nbytes"])
    shape = tuple(int(d) for d in entry["shape"])
    dtype = np.dtype(entry["dtype"])
    if start + nbytes > len(payload) or nbytes != dtype.itemsize * math.prod(shape):
        msg = f"tensor {entry['name']} lies outside the payload"
        raise CheckpointFormatError(msg)
    array = np.frombuffer(payload, dtype=dtype, count=math.prod(shape), offset=start)
    native = np.float32 if dtype.kind == "f" else np.int64
    return torch.from_numpy(array.reshape(shape).astype(native))


def load_checkpoint(path: Path) -> Checkpoint:
    """Read a checkpoint file.

    Raises
    ------
    CheckpointNotFoundError
        If ``path`` does not exist.
    CheckpointFormatError
        On a bad magic, version, header or tensor index.
    """
    path = Path(path)
    if not path.is_file():
        raise CheckpointNotFoundError(path)
    raw = path.read_bytes()
    if len(raw) < PREAMBLE.size:
        msg = f"{path}: file too short for a checkpoint"
        raise CheckpointFormatError(msg)
    magic, version, header_len = PREAMBLE.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        msg = f"{path}: not a checkpoint (magic {magic!r})"
        raise CheckpointFormatError(msg)
    if version != CHECKPOINT_VERSION:
        msg = f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        raise CheckpointFormatError(msg)
    body = raw[PREAMBLE.size :]
    try:
        header = json.loads(body[:header_len].decode("utf-8"))
        model_config = ModelConfig.model_validate(header["model_config"])
        train_config = TrainConfig.model_validate(header["train_config"])
    except (ValueError, KeyError) as exc:
        msg = f"{path}: unreadable checkpoint header: {exc}"
        raise CheckpointFormatError(msg) from exc
    payload = body[header_len:]
    tensors = {e["name"]: _read_tensor(payload, e) for e in header["tensors"]}
    state = {k: v for k, v in tensors.items() if not k.startswith("optimizer.")}
    optim = header.get("optimizer")
    return Checkpoint(
        model_config=model_config,
        train_config=train_config,
        state=state,
        epoch=int(header["epoch"]),
        best={k: float(v) for k, v in header["best"].items()},
        manifest_hash=str(header["manifest_hash"]),
        optimizer_state=None if optim is None else _unflatten_optimizer(optim, tensors),
    )


def restore_model(checkpoint: Checkpoint) -> ChannelPredictor:
    """Rebuild the network and load the stored weights (eval mode)."""
    config = checkpoint.model_config.model_copy(update={"pretrained": False})
    model = ChannelPredictor(config)
    model.load_state_dict(checkpoint.state, strict=True)
    model.eval()
    return model
