"""Validated configuration models.

All models are frozen pydantic models; invalid values raise at construction.
A JSON config file may hold the sections ``dataset`` (with a nested ``scene``),
``train`` and ``loss``::

    {
      "config_version": 1,
      "dataset": {"seed": 7, "snapshots_per_area": 120},
      "train": {"max_epochs": 30},
      "loss": {"omega_low": 8.0}
    }

``train`` holds overrides only; the defaults depend on the target
(see :meth:`TrainConfig.for_target`).
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any
from typing import Literal
from typing import Self

from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field
from pydantic import ValidationError
from pydantic import ValidationInfo
from pydantic import field_validator
from pydantic import model_validator

from v2i_chanpred.errors import ConfigError

logger = logging.getLogger(__name__)

CONFIG_VERSION = 1

Target = Literal["pl", "ds", "asa", "asd", "aps"]
Modality = Literal["semantic", "depth", "location"]

SCALAR_TARGETS: tuple[Target, ...] = ("pl", "ds", "asa", "asd")
ALL_MODALITIES: tuple[Modality, ...] = ("semantic", "depth", "location")

Range = tuple[float, float]
IntRange = tuple[int, int]


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


def canonical_modalities(value: tuple[Modality, ...]) -> tuple[Modality, ...]:
    """Validate a modality selection and return it in fusion order."""
    if not value:
        msg = "at least one modality must be active"
        raise ValueError(msg)
    if len(set(value)) != len(value):
        msg = f"duplicate modality in {value}"
        raise ValueError(msg)
    return tuple(m for m in ALL_MODALITIES if m in value)


def _check_range(name: str, value: tuple[float, float]) -> None:
    lo, hi = value
    if lo > hi:
        msg = f"{name} range is empty: ({lo}, {hi})"
        raise ValueError(msg)


# ─── Simulation ──────────────────────────────────────────────────────────────


class SceneConfig(_Frozen):
    """Parameters of one procedurally generated street-canyon area.

    The road runs along x through the middle of the area; buildings line both
    sides behind a sidewalk. Coordinates are meters, x east and y north.
    """

    seed: int = Field(default=0, ge=0, lt=2**64)
    area_id: int = Field(default=1, ge=1)
    extent_m: tuple[float, float] = (600.0, 200.0)
    road_width_m: float = Field(default=20.0, gt=0)
    sidewalk_m: float = Field(default=4.0, ge=0)
    building_count: IntRange = (4, 10)
    building_width_m: Range = (12.0, 40.0)
    building_depth_m: Range = (10.0, 30.0)
    building_height_m: Range = (10.0, 40.0)
    facade_loss_db: Range = (3.0, 10.0)
    vehicle_count: IntRange = (0, 6)
    pedestrian_count: IntRange = (0, 8)
    vehicle_loss_db: Range = (10.0, 16.0)
    pedestrian_loss_db: Range = (18.0, 26.0)
    tx_xy_m: tuple[float, float] = (300.0, 185.0)
    tx_height_m: float = Field(default=33.0, gt=0)
    rx_height_m: float = Field(default=2.7, gt=0)
    max_speed_kmh: float = Field(default=20.0, gt=0)
    min_speed_fraction: float = Field(default=0.3, gt=0, le=1)
    snapshot_interval_s: float = Field(default=0.5, gt=0)
    origin_latlon: tuple[float, float] = (39.9500, 116.3400)
    d_max_m: float = Field(default=100.0, gt=0)
    dynamic_range_db: float = Field(default=30.0, gt=0)
    max_paths: int = Field(default=20, ge=1)
    penetration_loss_db: float = Field(default=20.0, ge=0)
    carrier_hz: float = Field(default=4.85e9, gt=0)
    jitter_s: float = Field(default=0.04, ge=0)
    placement_retries: int = Field(default=200, ge=1)

    @field_validator(
        "building_count",
        "building_width_m",
        "building_depth_m",
        "building_height_m",
        "facade_loss_db",
        "vehicle_count",
        "pedestrian_count",
        "vehicle_loss_db",
        "pedestrian_loss_db",
    )
    @classmethod
    def _nonempty(
        cls, value: tuple[float, float], info: ValidationInfo
    ) -> tuple[float, float]:
        _check_range(info.field_name, value)
        if min(value) < 0:
            msg = f"{info.field_name} must be non-negative"
            raise ValueError(msg)
        return value

    @model_validator(mode="after")
    def _geometry(self) -> Self:
        width, length = self.extent_m
        if width <= 0 or length <= 0:
            msg = f"extent must be positive, got {self.extent_m}"
            raise ValueError(msg)
        if self.road_width_m + 2 * self.sidewalk_m >= length:
            msg = "road and sidewalks do not fit inside the area"
            raise ValueError(msg)
        tx, ty = self.tx_xy_m
        if not (0 <= tx <= width and 0 <= ty <= length):
            msg = f"tx position {self.tx_xy_m} lies outside the area"
            raise ValueError(msg)
        return self

    @property
    def road_center_y(self) -> float:
        return self.extent_m[1] / 2

    @property
    def road_bounds_y(self) -> tuple[float, float]:
        half = self.road_width_m / 2
        return self.road_center_y - half, self.road_center_y + half

    @property
    def rx_lane_y(self) -> float:
        return self.road_center_y - self.road_width_m / 4

    @property
    def max_speed_mps(self) -> float:
        return self.max_speed_kmh / 3.6


class FilterRules(_Frozen):
    """Thresholds of the dataset validity filter; ``None`` disables a rule."""

    min_total_power: float | None = 1e-16
    max_speed_kmh: float | None = 20.0
    jump_tolerance_m: float = Field(default=2.0, ge=0)
    stop_speed_mps: float | None = 0.1
    max_stop_s: float = Field(default=10.0, gt=0)

    @classmethod
    def empty(cls) -> FilterRules:
        return cls(min_total_power=None, max_speed_kmh=None, stop_speed_mps=None)


class DatasetConfig(_Frozen):
    """How ``gen-data`` builds a dataset: areas, counts and pipeline thresholds."""

    seed: int = Field(default=0, ge=0)
    areas: int = Field(default=4, ge=1)
    snapshots_per_area: int = Field(default=250, ge=1)
    tx_heights_m: tuple[float, ...] = (33.0, 34.0, 34.0, 3.0)
    tx_x_fractions: tuple[float, ...] = (0.5, 0.35, 0.65, 0.5)
    max_offset_s: float = Field(default=0.1, gt=0)
    image_size: int = Field(default=224, ge=8)
    filters: FilterRules = FilterRules()
    scene: SceneConfig = SceneConfig()

    @model_validator(mode="after")
    def _per_area(self) -> Self:
        if len(self.tx_heights_m) < self.areas or len(self.tx_x_fractions) < self.areas:
            msg = "tx_heights_m and tx_x_fractions need one entry per area"
            raise ValueError(msg)
        return self


# ─── Model, loss, training ───────────────────────────────────────────────────


class ModelConfig(_Frozen):
    """Structural hyperparameters of the fusion network."""

    backbone: str = "residual-34"
    freeze_early_stages: bool = True
    pretrained: bool = False
    semantic_dropout: float = Field(default=0.3, ge=0, lt=1)
    aps_dropout: float = Field(default=0.1, ge=0, lt=1)
    feature_width: int = Field(default=256, gt=0)
    modalities: tuple[Modality, ...] = ALL_MODALITIES
    target: Target = "pl"
    location_mean: float = 0.0
    location_std: float = Field(default=1.0, gt=0)

    @field_validator("modalities")
    @classmethod
    def _modalities(cls, value: tuple[Modality, ...]) -> tuple[Modality, ...]:
        return canonical_modalities(value)


class LossConfig(_Frozen):
    """Weights of the composite APS loss."""

    tau_threshold: float = Field(default=0.5, gt=0, lt=1)
    omega_low: float = Field(default=8.0, ge=1)
    omega_mse: float = Field(default=0.065, ge=0)
    omega_l1: float = Field(default=0.025, ge=0)
    omega_tp: float = Field(default=0.01, ge=0)
    epsilon: float = Field(default=1e-8, gt=0)


class TrainConfig(_Frozen):
    """Optimiser, schedule and protocol settings of one training run."""

    target: Target = "pl"
    batch_size: int = Field(default=16, ge=1)
    max_epochs: int = Field(default=100, ge=1)
    optimizer: Literal["adam", "adamw"] = "adam"
    learning_rate: float = Field(default=1e-3, gt=0)
    semantic_learning_rate: float | None = None
    weight_decay: float = Field(default=1e-6, ge=0)
    grad_clip: float = Field(default=1.0, gt=0)
    patience: int = Field(default=20, ge=1)
    scheduler: Literal["plateau", "cosine-restarts"] = "plateau"
    plateau_factor: float = Field(default=0.5, gt=0, lt=1)
    plateau_patience: int = Field(default=5, ge=0)
    restart_period: int = Field(default=10, ge=1)
    restart_mult: int = Field(default=2, ge=1)
    seed: int = Field(default=0, ge=0)
    val_fraction: float = Field(default=0.2, ge=0, lt=1)
    test_area: int = Field(default=4, ge=1)
    modalities: tuple[Modality, ...] = ALL_MODALITIES
    backbone: str = "residual-34"
    pretrained: bool = False
    device: str = "cpu"
    num_workers: int = Field(default=0, ge=0)

    @field_validator("modalities")
    @classmethod
    def _modalities(cls, value: tuple[Modality, ...]) -> tuple[Modality, ...]:
        return canonical_modalities(value)

    @classmethod
    def for_target(
        cls, target: Target, **overrides: Any  # noqa: ANN401
    ) -> TrainConfig:
        """Return the per-target defaults with ``overrides`` applied."""
        if target == "aps":
            base: dict[str, Any] = {
                "target": "aps",
                "batch_size": 8,
                "optimizer": "adamw",
                "learning_rate": 3.5e-4,
                "semantic_learning_rate": 3.5e-5,
                "weight_decay": 1e-4,
                "grad_clip": 1.5,
                "scheduler": "cosine-restarts",
            }
        else:
            base = {"target": target}
        for key, value in overrides.items():
            logger.info("train config override: %s=%r", key, value)
        return cls(**{**base, **overrides})

    def model_config_for(
        self, location_mean: float = 0.0, location_std: float = 1.0
    ) -> ModelConfig:
        return ModelConfig(
            backbone=self.backbone,
            pretrained=self.pretrained,
            modalities=self.modalities,
            target=self.target,
            location_mean=location_mean,
            location_std=location_std,
        )


# ─── File loading ────────────────────────────────────────────────────────────


class FileConfig(_Frozen):
    """Top-level document of a ``--config`` JSON file."""

    config_version: Literal[1] = CONFIG_VERSION
    dataset: DatasetConfig = DatasetConfig()
    train: dict[str, Any] = Field(default_factory=dict)
    loss: LossConfig = LossConfig()


def load_config(path: Path | None) -> FileConfig:
    """Read and validate a JSON config file (defaults when ``path`` is None)."""
    if path is None:
        return FileConfig()
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return FileConfig.model_validate(raw)
    except (OSError, json.JSONDecodeError, ValidationError) as exc:
        msg = f"cannot load config {path}: {exc}".replace("\n", " ")
        raise ConfigError(msg) from exc
