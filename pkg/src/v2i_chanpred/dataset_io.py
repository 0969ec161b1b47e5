"""On-disk dataset format.

A dataset directory holds::

    manifest.json           DatasetManifest (format version, counts, hash, ...)
    samples/<id>.tensors    stacked [2, 3, S, S] semantic/depth inputs
    labels/<id>.json        labels, coordinates, area and timestamp
    drops.log               tab-separated (snapshot_id, rule) of dropped snapshots
    mpcs.jsonl              MPC snapshots of the kept samples (optional)

Tensor files start with a 16-byte little-endian header ``<4sH5H``: the magic
``V2IT``, the rank and five uint16 dimensions (unused ones zero), followed by
the float32 payload in C order.

The content hash is the SHA-256 over, in manifest order, each sample's id,
tensor file bytes and label file bytes.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import struct
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING
from typing import Any
from typing import overload

import numpy as np
import pandas as pd
import torch
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import ValidationError
from torch.utils.data import Dataset

from v2i_chanpred.channel_stats import ChannelLabels
from v2i_chanpred.errors import DatasetFormatError
from v2i_chanpred.errors import HashMismatchError
from v2i_chanpred.errors import TruncatedTensorError
from v2i_chanpred.errors import UnknownAreaError
from v2i_chanpred.errors import VersionMismatchError
from v2i_chanpred.geo import haversine_m
from v2i_chanpred.palette import palette_to_json
from v2i_chanpred.scene import rng_stream

if TYPE_CHECKING:
    from collections.abc import Iterable
    from collections.abc import Iterator

    from numpy.typing import NDArray

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
TENSOR_MAGIC = b"V2IT"
TENSOR_HEADER = struct.Struct("<4sH5H")
MAX_RANK = 5

# heads learn in scaled units; reports multiply back
LABEL_SCALES: dict[str, float] = {
    "pl": 100.0,
    "ds": 100.0,
    "asa": 10.0,
    "asd": 10.0,
    "aps": 1.0,
}


@dataclass(frozen=True)
class Sample:
    snapshot_id: str
    area_id: int
    semantic_in: NDArray[np.float32]
    depth_in: NDArray[np.float32]
    tx_geo: tuple[float, float]
    rx_geo: tuple[float, float]
    labels: ChannelLabels
    timestamp_s: float = 0.0

    def __post_init__(self) -> None:
        for name in ("semantic_in", "depth_in"):
            arr = getattr(self, name)
            if arr.ndim != 3 or arr.shape[0] != 3:  # noqa: PLR2004
                msg = f"{name} must be 3 x S x S, got {arr.shape}"
                raise ValueError(msg)
            if arr.min() < 0 or arr.max() > 1:
                msg = f"{name} must lie in [0, 1]"
                raise ValueError(msg)

    @property
    def distance_m(self) -> float:
        return float(haversine_m(*self.tx_geo, *self.rx_geo))


class SampleEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    snapshot_id: str
    area_id: int


class DatasetManifest(BaseModel):
    model_config = ConfigDict(frozen=True)

    format_version: int = FORMAT_VERSION
    sample_count: int
    area_counts: dict[int, int]
    palette: dict[str, list[int]]
    label_scales: dict[str, float]
    location_mean: float
    location_std: float
    masked: bool
    seeds: list[int]
    image_size: int
    content_hash: str
    samples: list[SampleEntry]

    @property
    def snapshot_ids(self) -> list[str]:
        return [s.snapshot_id for s in self.samples]

    def area_of(self, index: int) -> int:
        return self.samples[index].area_id


# ─── Tensor files ────────────────────────────────────────────────────────────


def encode_tensor(array: NDArray[np.float32]) -> bytes:
    if array.ndim > MAX_RANK:
        msg = f"rank {array.ndim} exceeds {MAX_RANK}"
        raise DatasetFormatError(msg)
    dims = list(array.shape) + [0] * (MAX_RANK - array.ndim)
    header = TENSOR_HEADER.pack(TENSOR_MAGIC, array.ndim, *dims)
    return header + np.ascontiguousarray(array, dtype="<f4").tobytes()


def decode_tensor(raw: bytes, name: str = "tensor") -> NDArray[np.float32]:
    """Parse a tensor file.

    Raises
    ------
    TruncatedTensorError
        If the file is shorter than its header announces.
    DatasetFormatError
        On a bad magic, rank or trailing bytes.
    """
    if len(raw) < TENSOR_HEADER.size:
        msg = f"{name}: {len(raw)} bytes is shorter than the header"
        raise TruncatedTensorError(msg)
    magic, rank, *dims = TENSOR_HEADER.unpack_from(raw)
    if magic != TENSOR_MAGIC or not 0 < rank <= MAX_RANK:
        msg = f"{name}: not a tensor file (magic {magic!r}, rank {rank})"
        raise DatasetFormatError(msg)
    shape = tuple(dims[:rank])
    expected = TENSOR_HEADER.size + 4 * math.prod(shape)
    if len(raw) < expected:
        msg = f"{name}: {len(raw)} bytes, header announces {expected}"
        raise TruncatedTensorError(msg)
    if len(raw) > expected:
        msg = f"{name}: {len(raw) - expected} trailing bytes"
        raise DatasetFormatError(msg)
    payload = np.frombuffer(raw, dtype="<f4", offset=TENSOR_HEADER.size)
    return payload.reshape(shape).astype(np.float32)


# ─── Labels ──────────────────────────────────────────────────────────────────


def _label_record(sample: Sample) -> dict[str, object]:
    lab = sample.labels
    return {
        "snapshot_id": sample.snapshot_id,
        "area_id": sample.area_id,
        "timestamp_s": sample.timestamp_s,
        "tx_geo": list(sample.tx_geo),
        "rx_geo": list(sample.rx_geo),
        "pl_db": lab.pl_db,
        "ds_ns": lab.ds_ns,
        "asa_deg": lab.asa_deg,
        "asd_deg": lab.asd_deg,
        "aps": lab.aps.tolist(),
    }


def _sample_from(record: dict[str, Any], tensor: NDArray[np.float32]) -> Sample:
    try:
        labels = ChannelLabels(
            pl_db=float(record["pl_db"]),
            ds_ns=float(record["ds_ns"]),
            asa_deg=float(record["asa_deg"]),
            asd_deg=float(record["asd_deg"]),
            aps=np.asarray(record["aps"], dtype=np.float64),
        )
        tx = record["tx_geo"]
        rx = record["rx_geo"]
        return Sample(
            snapshot_id=str(record["snapshot_id"]),
            area_id=int(record["area_id"]),
            semantic_in=tensor[0],
            depth_in=tensor[1],
            tx_geo=(float(tx[0]), float(tx[1])),
            rx_geo=(float(rx[0]), float(rx[1])),
            labels=labels,
            timestamp_s=float(record.get("timestamp_s", 0.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        msg = f"malformed label record: {exc}"
        raise DatasetFormatError(msg) from exc


# ─── Writing ─────────────────────────────────────────────────────────────────


class DatasetWriter:
    """Stream samples into a dataset directory; :meth:`close` writes the manifest."""

    def __init__(
        self,
        directory: Path,
        *,
        masked: bool = False,
        seeds: Sequence[int] = (),
        palette: dict[int, tuple[int, int, int]] | None = None,
    ) -> None:
        self.directory = Path(directory)
        (self.directory / "samples").mkdir(parents=True, exist_ok=True)
        (self.directory / "labels").mkdir(parents=True, exist_ok=True)
        self.masked = masked
        self.seeds = list(seeds)
        self.palette = palette_to_json(palette)
        self._hash = hashlib.sha256()
        self._entries: list[SampleEntry] = []
        self._distances: list[float] = []
        self._image_size = 0

    def add(self, sample: Sample) -> None:
        tensor = np.stack([sample.semantic_in, sample.depth_in])
        tensor_bytes = encode_tensor(tensor)
        label_bytes = json.dumps(_label_record(sample), sort_keys=True).encode("utf-8")
        sid = sample.snapshot_id
        (self.directory / "samples" / f"{sid}.tensors").write_bytes(tensor_bytes)
        (self.directory / "labels" / f"{sid}.json").write_bytes(label_bytes)
        self._hash.update(sid.encode("utf-8") + b"\0" + tensor_bytes + label_bytes)
        self._entries.append(SampleEntry(snapshot_id=sid, area_id=sample.area_id))
        self._distances.append(sample.distance_m)
        self._image_size = int(sample.semantic_in.shape[-1])

    def write_drops(self, drops: pd.DataFrame) -> None:
        drops.to_csv(self.directory / "drops.log", sep="\t", index=False)

    def close(self) -> DatasetManifest:
        counts: dict[int, int] = {}
        for entry in self._entries:
            counts[entry.area_id] = counts.get(entry.area_id, 0) + 1
        dist = np.asarray(self._distances, dtype=np.float64)
        mean = float(dist.mean()) if dist.size else 0.0
        std = float(dist.std()) if dist.size else 0.0
        manifest = DatasetManifest(
            sample_count=len(self._entries),
            area_counts=dict(sorted(counts.items())),
            palette=self.palette,
            label_scales=LABEL_SCALES,
            location_mean=mean,
            location_std=std if std > 0 else 1.0,
            masked=self.masked,
            seeds=self.seeds,
            image_size=self._image_size,
            content_hash=self._hash.hexdigest(),
            samples=self._entries,
        )
        if not (self.directory / "drops.log").exists():
            self.write_drops(pd.DataFrame({"snapshot_id": [], "rule": []}))
        (self.directory / "manifest.json").write_text(
            manifest.model_dump_json(indent=2), encoding="utf-8"
        )
        logger.info(
            "wrote %d samples to %s (hash %s)",
            manifest.sample_count,
            self.directory,
            manifest.content_hash[:12],
        )
        return manifest


def write_dataset(
    samples: Iterable[Sample],
    directory: Path,
    *,
    masked: bool = False,
    seeds: Sequence[int] = (),
    drops: pd.DataFrame | None = None,
) -> DatasetManifest:
    writer = DatasetWriter(directory, masked=masked, seeds=seeds)
    for sample in samples:
        writer.add(sample)
    if drops is not None:
        writer.write_drops(drops)
    return writer.close()


# ─── Reading ─────────────────────────────────────────────────────────────────


class SampleSequence(Sequence[Sample]):
    """Read-only, lazily decoded view of a verified dataset directory."""

    def __init__(self, directory: Path, manifest: DatasetManifest) -> None:
        self.directory = directory
        self.manifest = manifest

    def __len__(self) -> int:
        return self.manifest.sample_count

    @overload
    def __getitem__(self, index: int) -> Sample: ...
    @overload
    def __getitem__(self, index: slice) -> list[Sample]: ...
    def __getitem__(self, index: int | slice) -> Sample | list[Sample]:
        if isinstance(index, slice):
            return [self[i] for i in range(*index.indices(len(self)))]
        sid = self.manifest.samples[index].snapshot_id
        raw = (self.directory / "samples" / f"{sid}.tensors").read_bytes()
        label_path = self.directory / "labels" / f"{sid}.json"
        record = json.loads(label_path.read_text(encoding="utf-8"))
        return _sample_from(record, decode_tensor(raw, sid))

    def __iter__(self) -> Iterator[Sample]:
        for i in range(len(self)):
            yield self[i]


def read_manifest(directory: Path) -> DatasetManifest:
    path = Path(directory) / "manifest.json"
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        msg = f"cannot read manifest {path}: {exc}"
        raise DatasetFormatError(msg) from exc
    version = raw.get("format_version") if isinstance(raw, dict) else None
    if version != FORMAT_VERSION:
        msg = f"dataset format version {version!r}, expected {FORMAT_VERSION}"
        raise VersionMismatchError(msg)
    try:
        return DatasetManifest.model_validate(raw)
    except ValidationError as exc:
        msg = f"invalid manifest {path}: {exc}".replace("\n", " ")
        raise DatasetFormatError(msg) from exc


def read_dataset(directory: Path) -> tuple[SampleSequence, DatasetManifest]:
    """Verify a dataset directory and return a lazy view of its samples.

    Raises
    ------
    VersionMismatchError
        If the manifest has another format version.
    TruncatedTensorError
        If a tensor file is shorter than announced.
    HashMismatchError
        If the recomputed content hash differs from the manifest.
    """
    directory = Path(directory)
    manifest = read_manifest(directory)
    digest = hashlib.sha256()
    for entry in manifest.samples:
        sid = entry.snapshot_id
        try:
            tensor_bytes = (directory / "samples" / f"{sid}.tensors").read_bytes()
            label_bytes = (directory / "labels" / f"{sid}.json").read_bytes()
        except OSError as exc:
            msg = f"missing files for sample {sid}: {exc}"
            raise DatasetFormatError(msg) from exc
        decode_tensor(tensor_bytes, sid)
        digest.update(sid.encode("utf-8") + b"\0" + tensor_bytes + label_bytes)
    if digest.hexdigest() != manifest.content_hash:
        msg = (
            f"content hash {digest.hexdigest()[:12]} does not match "
            f"manifest {manifest.content_hash[:12]} in {directory}"
        )
        raise HashMismatchError(msg)
    return SampleSequence(directory, manifest), manifest


def read_drops(directory: Path) -> pd.DataFrame:
    path = Path(directory) / "drops.log"
    if not path.exists():
        return pd.DataFrame({"snapshot_id": [], "rule": []})
    return pd.read_csv(path, sep="\t", dtype=str, keep_default_na=False)


# ─── Splits and torch access ─────────────────────────────────────────────────


def split_by_area(
    manifest: DatasetManifest,
    test_area: int,
    val_fraction: float = 0.2,
    seed: int = 0,
) -> tuple[list[int], list[int], list[int]]:
    """Return sorted (train, val, test) sample indices.

    The test split is every sample of ``test_area``; the rest is shuffled with
    ``seed`` and cut into training and validation parts.

    Raises
    ------
    UnknownAreaError
        If ``test_area`` has no samples.
    """
    if test_area not in manifest.area_counts:
        areas = sorted(manifest.area_counts)
        msg = f"test area {test_area} not in dataset areas {areas}"
        raise UnknownAreaError(msg)
    test = [i for i, s in enumerate(manifest.samples) if s.area_id == test_area]
    rest = np.array(
        [i for i, s in enumerate(manifest.samples) if s.area_id != test_area],
        dtype=np.int64,
    )
    rng_stream(seed, "split").shuffle(rest)
    n_val = round(len(rest) * val_fraction)
    val = sorted(int(i) for i in rest[:n_val])
    train = sorted(int(i) for i in rest[n_val:])
    return train, val, test


class ChannelDataset(Dataset[dict[str, torch.Tensor]]):
    """Torch view of selected samples with the target in scaled units."""

    def __init__(
        self,
        samples: Sequence[Sample],
        indices: Sequence[int],
        target: str,
        label_scales: dict[str, float] | None = None,
    ) -> None:
        self.samples = samples
        self.indices = list(indices)
        self.target = target
        self.scale = (label_scales or LABEL_SCALES)[target]

    def __len__(self) -> int:
        return len(self.indices)

    def target_of(self, sample: Sample) -> torch.Tensor:
        if self.target == "aps":
            return torch.as_tensor(sample.labels.aps, dtype=torch.float32)
        value = sample.labels.scalar(self.target) / self.scale
        return torch.tensor([value], dtype=torch.float32)

    def __getitem__(self, i: int) -> dict[str, torch.Tensor]:
        sample = self.samples[self.indices[i]]
        return {
            "semantic": torch.tensor(sample.semantic_in, dtype=torch.float32),
            "depth": torch.tensor(sample.depth_in, dtype=torch.float32),
            "tx_geo": torch.tensor(sample.tx_geo, dtype=torch.float64),
            "rx_geo": torch.tensor(sample.rx_geo, dtype=torch.float64),
            "target": self.target_of(sample),
            "index": torch.tensor(self.indices[i]),
        }
