"""Checkpoint evaluation on one split of a dataset.

``predictions.csv`` columns:

* scalar targets: ``snapshot_id, area_id, timestamp_s, target, prediction, unit``
  with values in physical units (dB, ns or degrees);
* APS: ``snapshot_id, area_id, timestamp_s, t000..t359, p000..p359`` with the
  peak-normalized spectra.

Metrics are a pure function of that table, so a report can be regenerated from
the run directory alone.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import TYPE_CHECKING
from typing import Any
from typing import Literal

import numpy as np
import pandas as pd
import torch
from torch.utils.data import DataLoader

from v2i_chanpred.checkpoint import CHECKPOINT_NAME
from v2i_chanpred.checkpoint import load_checkpoint
from v2i_chanpred.checkpoint import restore_model
from v2i_chanpred.dataset_io import ChannelDataset
from v2i_chanpred.dataset_io import read_dataset
from v2i_chanpred.dataset_io import split_by_area
from v2i_chanpred.errors import ShapeMismatchError
from v2i_chanpred.errors import TargetMismatchError
from v2i_chanpred.metrics import cosine_distribution
from v2i_chanpred.metrics import mae
from v2i_chanpred.metrics import rmse
from v2i_chanpred.metrics import row_cosines
from v2i_chanpred.model import APS_BINS

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from v2i_chanpred.dataset_io import DatasetManifest
    from v2i_chanpred.model import ChannelPredictor

logger = logging.getLogger(__name__)

Split = Literal["train", "val", "test"]

UNITS = {"pl": "dB", "ds": "ns", "asa": "deg", "asd": "deg", "aps": "normalized"}
TARGET_COLUMNS = [f"t{k:03d}" for k in range(APS_BINS)]
PREDICTION_COLUMNS = [f"p{k:03d}" for k in range(APS_BINS)]
METRICS_NAME = "metrics.json"


def predictions_name(split: Split) -> str:
    return "predictions.csv" if split == "test" else f"predictions_{split}.csv"


@torch.no_grad()
def predict(
    model: ChannelPredictor,
    dataset: ChannelDataset,
    batch_size: int = 16,
    device: str = "cpu",
) -> tuple[NDArray[np.int64], NDArray[np.float64], NDArray[np.float64]]:
    """Return (sample indices, targets, predictions) in the model's scaled units."""
    model.eval().to(device)
    loader = DataLoader(dataset, batch_size=batch_size, shuffle=False)
    indices, targets, preds = [], [], []
    for batch in loader:
        out = model({k: v.to(device) for k, v in batch.items()})
        indices.append(batch["index"].numpy())
        targets.append(batch["target"].numpy())
        preds.append(out.cpu().numpy())
    if not indices:
        msg = "cannot predict on an empty split"
        raise ShapeMismatchError(msg)
    return (
        np.concatenate(indices).astype(np.int64),
        np.concatenate(targets).astype(np.float64),
        np.concatenate(preds).astype(np.float64),
    )


def prediction_frame(
    manifest: DatasetManifest,
    indices: NDArray[np.int64],
    target: NDArray[np.float64],
    prediction: NDArray[np.float64],
    target_name: str,
    timestamps: list[float] | None = None,
) -> pd.DataFrame:
    """Tabulate predictions; scalar values are de-scaled to physical units."""
    base = pd.DataFrame(
        {
            "snapshot_id": [manifest.samples[i].snapshot_id for i in indices],
            "area_id": [manifest.samples[i].area_id for i in indices],
            "timestamp_s": timestamps if timestamps is not None else 0.0,
        }
    )
    if target_name == "aps":
        spectra = pd.DataFrame(
            np.hstack([target, prediction]),
            columns=TARGET_COLUMNS + PREDICTION_COLUMNS,
        )
        return pd.concat([base, spectra], axis=1)
    scale = manifest.label_scales[target_name]
    base["target"] = target[:, 0] * scale
    base["prediction"] = prediction[:, 0] * scale
    base["unit"] = UNITS[target_name]
    return base


def compute_metrics(frame: pd.DataFrame, target_name: str) -> dict[str, Any]:
    """Metrics of a prediction table (pure)."""
    metrics: dict[str, Any] = {
        "target": target_name,
        "unit": UNITS[target_name],
        "count": len(frame),
    }
    if target_name == "aps":
        t = frame[TARGET_COLUMNS].to_numpy(dtype=np.float64)
        p = frame[PREDICTION_COLUMNS].to_numpy(dtype=np.float64)
        metrics["rmse"] = rmse(t, p)
        metrics["mae"] = mae(t, p)
        metrics["cosine"] = cosine_distribution(row_cosines(t, p)).to_dict()
        return metrics
    t = frame["target"].to_numpy(dtype=np.float64)
    p = frame["prediction"].to_numpy(dtype=np.float64)
    metrics["rmse"] = rmse(t, p)
    metrics["mae"] = mae(t, p)
    return metrics


def split_indices(
    manifest: DatasetManifest,
    split: Split,
    *,
    test_area: int,
    val_fraction: float,
    seed: int,
) -> list[int]:
    train, val, test = split_by_area(manifest, test_area, val_fraction, seed)
    return {"train": train, "val": val, "test": test}[split]


def evaluate(
    run_dir: Path,
    data_dir: Path,
    split: Split = "test",
    target: str | None = None,
    *,
    device: str | None = None,
) -> dict[str, Any]:
    """Evaluate the checkpoint of ``run_dir`` and write predictions and metrics.

    Raises
    ------
    CheckpointNotFoundError
        If ``run_dir`` holds no checkpoint.
    TargetMismatchError
        If ``target`` differs from the checkpoint's target.
    """
    run_dir = Path(run_dir)
    ckpt = load_checkpoint(run_dir / CHECKPOINT_NAME)
    cfg = ckpt.train_config
    if target is not None and target != cfg.target:
        msg = f"checkpoint in {run_dir} predicts {cfg.target!r}, not {target!r}"
        raise TargetMismatchError(msg)
    samples, manifest = read_dataset(data_dir)
    if ckpt.manifest_hash and ckpt.manifest_hash != manifest.content_hash:
        logger.warning(
            "evaluating on dataset %s, trained on %s",
            manifest.content_hash[:12],
            ckpt.manifest_hash[:12],
        )
    indices = split_indices(
        manifest,
        split,
        test_area=cfg.test_area,
        val_fraction=cfg.val_fraction,
        seed=cfg.seed,
    )
    dataset = ChannelDataset(samples, indices, cfg.target, manifest.label_scales)
    model = restore_model(ckpt)
    idx, t, p = predict(model, dataset, cfg.batch_size, device or cfg.device)
    frame = prediction_frame(
        manifest,
        idx,
        t,
        p,
        cfg.target,
        timestamps=[samples[int(i)].timestamp_s for i in idx],
    )
    frame.to_csv(run_dir / predictions_name(split), index=False)
    metrics = compute_metrics(frame, cfg.target)
    metrics["split"] = split
    metrics["checkpoint_epoch"] = ckpt.epoch
    if split == "test":
        (run_dir / METRICS_NAME).write_text(
            json.dumps(metrics, indent=2, sort_keys=True), encoding="utf-8"
        )
    logger.info(
        "%s %s: RMSE %.4g %s, MAE %.4g",
        cfg.target,
        split,
        metrics["rmse"],
        metrics["unit"],
        metrics["mae"],
    )
    return metrics
