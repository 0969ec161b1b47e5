"""Seeded training loop for one target.

A run directory holds::

    config.echo      JSON echo of train, model and loss config, seed and dataset hash
    train.log        one JSON object per optimisation step
    curves.csv       epoch, train_loss, val_loss, train_error, lr_<group>...
    checkpoint       best-validation weights (see :mod:`v2i_chanpred.checkpoint`)
    predictions.csv  test-split predictions in physical units
    metrics.json     test-split metrics
"""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING
from typing import Any

import numpy as np
import pandas as pd
import torch
from torch.utils.data import DataLoader
from tqdm import tqdm

from v2i_chanpred.checkpoint import CHECKPOINT_NAME
from v2i_chanpred.checkpoint import save_checkpoint
from v2i_chanpred.config import LossConfig
from v2i_chanpred.dataset_io import ChannelDataset
from v2i_chanpred.dataset_io import read_dataset
from v2i_chanpred.dataset_io import split_by_area
from v2i_chanpred.errors import NonFiniteLossError
from v2i_chanpred.evaluation import evaluate
from v2i_chanpred.losses import composite_aps_loss
from v2i_chanpred.losses import cos_sim
from v2i_chanpred.losses import mse_loss
from v2i_chanpred.model import ChannelPredictor

if TYPE_CHECKING:
    from collections.abc import Iterable
    from collections.abc import Mapping

    from v2i_chanpred.config import TrainConfig
    from v2i_chanpred.dataset_io import DatasetManifest
    from v2i_chanpred.dataset_io import SampleSequence

logger = logging.getLogger(__name__)
step_logger = logging.getLogger(f"{__name__}.steps")
step_logger.propagate = False

CONFIG_ECHO = "config.echo"
STEP_LOG = "train.log"
CURVES = "curves.csv"


# ─── Helpers ─────────────────────────────────────────────────────────────────


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed)  # noqa: NPY002
    torch.manual_seed(seed)


class JsonLinesFormatter(logging.Formatter):
    """Render the ``record`` mapping passed through ``extra`` as one JSON line."""

    def format(self, record: logging.LogRecord) -> str:
        payload = getattr(record, "record", None)
        if payload is None:
            payload = {"message": record.getMessage()}
        return json.dumps(payload, sort_keys=True)


class StepLog:
    """Context manager attaching a JSON-lines file handler to the step logger."""

    def __init__(self, path: Path) -> None:
        self.path = path
        self.handler = logging.FileHandler(path, mode="w", encoding="utf-8")
        self.handler.setFormatter(JsonLinesFormatter())

    def __enter__(self) -> StepLog:
        step_logger.setLevel(logging.INFO)
        step_logger.addHandler(self.handler)
        return self

    def __exit__(self, *exc: object) -> None:
        step_logger.removeHandler(self.handler)
        self.handler.close()

    @staticmethod
    def write(record: Mapping[str, Any]) -> None:
        step_logger.info("step", extra={"record": dict(record)})


class EarlyStopping:
    """Stop after ``patience`` consecutive epochs without strict improvement."""

    def __init__(self, patience: int) -> None:
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def step(self, value: float, epoch: int) -> bool:
        """Record one validation value; return True when it is a new best."""
        if value < self.best:
            self.best = value
            self.best_epoch = epoch
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


def build_optimizer(
    model: ChannelPredictor, config: TrainConfig
) -> torch.optim.Optimizer:
    groups = model.parameter_groups(
        config.learning_rate, config.semantic_learning_rate
    )
    if config.optimizer == "adamw":
        return torch.optim.AdamW(groups, weight_decay=config.weight_decay)
    return torch.optim.Adam(groups, weight_decay=config.weight_decay)


Scheduler = (
    torch.optim.lr_scheduler.ReduceLROnPlateau
    | torch.optim.lr_scheduler.CosineAnnealingWarmRestarts
)


def build_scheduler(
    optimizer: torch.optim.Optimizer, config: TrainConfig
) -> Scheduler:
    if config.scheduler == "cosine-restarts":
        return torch.optim.lr_scheduler.CosineAnnealingWarmRestarts(
            optimizer, T_0=config.restart_period, T_mult=config.restart_mult
        )
    return torch.optim.lr_scheduler.ReduceLROnPlateau(
        optimizer,
        mode="min",
        factor=config.plateau_factor,
        patience=config.plateau_patience,
    )


def step_scheduler(scheduler: Scheduler, val_loss: float, epoch: int) -> None:
    """Advance the schedule by one epoch and log plateau cuts and restarts."""
    if isinstance(scheduler, torch.optim.lr_scheduler.ReduceLROnPlateau):
        before = [g["lr"] for g in scheduler.optimizer.param_groups]
        scheduler.step(val_loss)
        after = [g["lr"] for g in scheduler.optimizer.param_groups]
        if after != before:
            logger.info("epoch %d: plateau, lr %s -> %s", epoch, before, after)
        return
    scheduler.step()
    if scheduler.T_cur == 0:
        logger.info("epoch %d: warm restart, next period %d", epoch, scheduler.T_i)


def grad_norm(parameters: Iterable[torch.nn.Parameter]) -> float:
    norms = [p.grad.detach().norm(2) for p in parameters if p.grad is not None]
    if not norms:
        return 0.0
    return float(torch.linalg.vector_norm(torch.stack(norms), 2))


def target_loss(
    target_name: str,
    target: torch.Tensor,
    prediction: torch.Tensor,
    loss_config: LossConfig,
) -> tuple[torch.Tensor, dict[str, float]]:
    if target_name == "aps":
        return composite_aps_loss(target, prediction, loss_config)
    loss = mse_loss(target, prediction)
    return loss, {"mse": float(loss.detach()), "total": float(loss.detach())}


def make_loader(
    samples: SampleSequence,
    indices: list[int],
    config: TrainConfig,
    manifest: DatasetManifest,
    *,
    shuffle: bool,
) -> DataLoader[dict[str, torch.Tensor]]:
    dataset = ChannelDataset(samples, indices, config.target, manifest.label_scales)
    return DataLoader(
        dataset,
        batch_size=config.batch_size,
        shuffle=shuffle,
        num_workers=config.num_workers,
        generator=torch.Generator().manual_seed(config.seed),
    )


def _to_device(
    batch: Mapping[str, torch.Tensor], device: str
) -> dict[str, torch.Tensor]:
    return {k: v.to(device) for k, v in batch.items()}


# ─── Loop ────────────────────────────────────────────────────────────────────


@dataclass
class EpochStats:
    loss: float
    error: float


@dataclass(frozen=True)
class RunResult:
    run_dir: Path
    epochs_run: int
    best_epoch: int
    best_val_loss: float
    curves: pd.DataFrame
    metrics: dict[str, Any]


def _error_of(
    target_name: str, target: torch.Tensor, prediction: torch.Tensor
) -> tuple[float, int]:
    """Summed per-sample error: squared error (scalar) or 1 - cosine (APS)."""
    if target_name == "aps":
        return float(torch.sum(1.0 - cos_sim(target, prediction))), target.shape[0]
    return float(torch.sum((prediction - target) ** 2)), target.numel()


class Trainer:
    """Owns one model, its optimizer and schedule for a single run."""

    def __init__(
        self,
        model: ChannelPredictor,
        config: TrainConfig,
        loss_config: LossConfig | None = None,
        *,
        scale: float = 1.0,
    ) -> None:
        self.model = model.to(config.device)
        self.config = config
        self.loss_config = loss_config or LossConfig()
        self.scale = scale
        self.optimizer = build_optimizer(model, config)
        self.scheduler = build_scheduler(self.optimizer, config)
        self.global_step = 0

    def _params(self) -> list[torch.nn.Parameter]:
        return [p for p in self.model.parameters() if p.requires_grad]

    def train_step(
        self, batch: Mapping[str, torch.Tensor], epoch: int
    ) -> tuple[torch.Tensor, float]:
        """One optimisation step; returns the detached predictions and the loss."""
        batch = _to_device(batch, self.config.device)
        self.optimizer.zero_grad(set_to_none=True)
        prediction = self.model(batch)
        loss, breakdown = target_loss(
            self.config.target, batch["target"], prediction, self.loss_config
        )
        if not torch.isfinite(loss):
            step = self.global_step + 1
            msg = f"non-finite loss {float(loss)} at epoch {epoch}, step {step}"
            raise NonFiniteLossError(msg)
        loss.backward()
        params = self._params()
        pre = float(torch.nn.utils.clip_grad_norm_(params, self.config.grad_clip))
        post = grad_norm(params)
        self.optimizer.step()
        self.global_step += 1
        StepLog.write(
            {
                "epoch": epoch,
                "step": self.global_step,
                "loss": breakdown["total"],
                "terms": breakdown,
                "grad_norm_pre": pre,
                "grad_norm_post": post,
                "lr": {g["name"]: g["lr"] for g in self.optimizer.param_groups},
            }
        )
        return prediction.detach(), breakdown["total"]

    def train_epoch(
        self, loader: Iterable[Mapping[str, torch.Tensor]], epoch: int
    ) -> EpochStats:
        self.model.train()
        total, batches, err_sum, err_count = 0.0, 0, 0.0, 0
        for batch in loader:
            prediction, loss = self.train_step(batch, epoch)
            target = batch["target"].to(prediction.device)
            total += loss
            batches += 1
            s, n = _error_of(self.config.target, target, prediction)
            err_sum += s
            err_count += n
        return EpochStats(
            loss=total / max(batches, 1), error=self._error(err_sum, err_count)
        )

    @torch.no_grad()
    def validate(self, loader: Iterable[Mapping[str, torch.Tensor]]) -> EpochStats:
        self.model.eval()
        total, batches, err_sum, err_count = 0.0, 0, 0.0, 0
        for raw in loader:
            batch = _to_device(raw, self.config.device)
            prediction = self.model(batch)
            loss, _ = target_loss(
                self.config.target, batch["target"], prediction, self.loss_config
            )
            total += float(loss)
            batches += 1
            s, n = _error_of(self.config.target, batch["target"], prediction)
            err_sum += s
            err_count += n
        return EpochStats(
            loss=total / max(batches, 1), error=self._error(err_sum, err_count)
        )

    def _error(self, err_sum: float, count: int) -> float:
        if count == 0:
            return math.nan
        if self.config.target == "aps":
            return err_sum / count
        return math.sqrt(err_sum / count) * self.scale

    def learning_rates(self) -> dict[str, float]:
        return {f"lr_{g['name']}": g["lr"] for g in self.optimizer.param_groups}

    def step_schedule(self, val_loss: float, epoch: int) -> None:
        step_scheduler(self.scheduler, val_loss, epoch)


def write_config_echo(
    run_dir: Path,
    config: TrainConfig,
    trainer: Trainer,
    manifest: DatasetManifest,
    data_dir: Path,
) -> None:
    echo = {
        "train": config.model_dump(mode="json"),
        "model": trainer.model.config.model_dump(mode="json"),
        "loss": trainer.loss_config.model_dump(mode="json"),
        "seed": config.seed,
        "data_dir": str(data_dir),
        "manifest_hash": manifest.content_hash,
    }
    (run_dir / CONFIG_ECHO).write_text(
        json.dumps(echo, indent=2, sort_keys=True), encoding="utf-8"
    )


def train(
    data_dir: Path,
    config: TrainConfig,
    out_dir: Path,
    *,
    loss_config: LossConfig | None = None,
    progress: bool = True,
) -> RunResult:
    """Train one model and evaluate its best checkpoint on the test area.

    Raises
    ------
    NonFiniteLossError
        If a training loss becomes NaN or infinite.
    """
    data_dir, run_dir = Path(data_dir), Path(out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    samples, manifest = read_dataset(data_dir)
    train_idx, val_idx, _ = split_by_area(
        manifest, config.test_area, config.val_fraction, config.seed
    )
    if not val_idx:
        logger.warning("empty validation split; validating on the training split")
        val_idx = train_idx

    seed_everything(config.seed)
    model_config = config.model_config_for(
        manifest.location_mean, manifest.location_std
    )
    trainer = Trainer(
        ChannelPredictor(model_config),
        config,
        loss_config,
        scale=manifest.label_scales.get(config.target, 1.0),
    )
    write_config_echo(run_dir, config, trainer, manifest, data_dir)
    train_loader = make_loader(samples, train_idx, config, manifest, shuffle=True)
    val_loader = make_loader(samples, val_idx, config, manifest, shuffle=False)
    stopper = EarlyStopping(config.patience)
    rows: list[dict[str, float]] = []

    with StepLog(run_dir / STEP_LOG):
        bar = tqdm(
            range(1, config.max_epochs + 1), desc="epochs", disable=not progress
        )
        for epoch in bar:
            lrs = trainer.learning_rates()
            fit = trainer.train_epoch(train_loader, epoch)
            val = trainer.validate(val_loader)
            rows.append(
                {
                    "epoch": epoch,
                    "train_loss": fit.loss,
                    "val_loss": val.loss,
                    "train_error": fit.error,
                    "val_error": val.error,
                    **lrs,
                }
            )
            if stopper.step(val.loss, epoch):
                save_checkpoint(
                    run_dir / CHECKPOINT_NAME,
                    trainer.model,
                    config,
                    optimizer=trainer.optimizer,
                    epoch=epoch,
                    best={"epoch": epoch, "val_loss": val.loss},
                    manifest_hash=manifest.content_hash,
                )
            trainer.step_schedule(val.loss, epoch)
            if stopper.should_stop:
                logger.info(
                    "early stop at epoch %d (best %d, val %.6g)",
                    epoch,
                    stopper.best_epoch,
                    stopper.best,
                )
                break

    curves = pd.DataFrame(rows)
    curves.to_csv(run_dir / CURVES, index=False)
    metrics = evaluate(run_dir, data_dir, "test", config.target)
    return RunResult(
        run_dir=run_dir,
        epochs_run=len(rows),
        best_epoch=stopper.best_epoch,
        best_val_loss=stopper.best,
        curves=curves,
        metrics=metrics,
    )
