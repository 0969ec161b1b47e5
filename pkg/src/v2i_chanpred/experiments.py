"""The four experiment protocols.

* ``exp1``: modality ablation for every scalar target;
* ``exp2``: raw vs dynamic-scatterer-masked inputs with paired runs;
* ``exp3``: semantic backbone sweep with complexity accounting;
* ``exp4``: APS prediction with cosine distribution and overlay plots.

Each runner trains its arms under ``out_dir``, writes ``experiment.json``, the
plots and ``report.{json,csv}``, and returns the rebuilt report.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from dataclasses import field
from pathlib import Path
from typing import TYPE_CHECKING
from typing import Any

import numpy as np
import pandas as pd

from v2i_chanpred.checkpoint import CHECKPOINT_NAME
from v2i_chanpred.checkpoint import load_checkpoint
from v2i_chanpred.checkpoint import restore_model
from v2i_chanpred.complexity import count_params
from v2i_chanpred.complexity import estimate_flops
from v2i_chanpred.complexity import measure_latency
from v2i_chanpred.config import SCALAR_TARGETS
from v2i_chanpred.config import LossConfig
from v2i_chanpred.config import TrainConfig
from v2i_chanpred.dataset_io import read_manifest
from v2i_chanpred.errors import UnpairedDatasetError
from v2i_chanpred.errors import UnknownBackboneError
from v2i_chanpred.evaluation import PREDICTION_COLUMNS
from v2i_chanpred.evaluation import TARGET_COLUMNS
from v2i_chanpred.export_manager import save_figure
from v2i_chanpred.metrics import cosine_distribution
from v2i_chanpred.metrics import row_cosines
from v2i_chanpred.model import BACKBONES
from v2i_chanpred.plotting import aps_overlay_figure
from v2i_chanpred.plotting import cosine_histogram_figure
from v2i_chanpred.plotting import error_curves_figure
from v2i_chanpred.plotting import loss_curves_figure
from v2i_chanpred.plotting import prediction_trace_figure
from v2i_chanpred.reporting import COMPLEXITY_FILE
from v2i_chanpred.reporting import EXPERIMENT_FILE
from v2i_chanpred.reporting import REPORT_SCHEMA_VERSION
from v2i_chanpred.reporting import ExperimentReport
from v2i_chanpred.reporting import build_report
from v2i_chanpred.reporting import write_report
from v2i_chanpred.training import CURVES
from v2i_chanpred.training import train

if TYPE_CHECKING:
    from collections.abc import Sequence

    import plotly.graph_objects as go

    from v2i_chanpred.config import Modality
    from v2i_chanpred.config import Target

logger = logging.getLogger(__name__)

DEFAULT_TEST_AREAS = {"exp1": 4, "exp2": 1, "exp3": 2, "exp4": 4}
MODALITY_COMBOS: tuple[tuple[Modality, ...], ...] = (
    ("semantic", "depth", "location"),
    ("semantic", "depth"),
    ("semantic", "location"),
    ("semantic",),
)
SWEEP_BACKBONES = ("residual-34", "compact-conv")
OVERLAY_COUNT = 4
LATENCY_BATCH = 2
LATENCY_REPETITIONS = 20


@dataclass
class ExperimentSettings:
    """What every runner shares: data, output, seeds and training overrides."""

    data_dir: Path
    out_dir: Path
    seed: int = 0
    test_area: int | None = None
    targets: tuple[Target, ...] | None = None
    overrides: dict[str, Any] = field(default_factory=dict)
    loss: LossConfig = field(default_factory=LossConfig)
    plots: bool = True
    progress: bool = True

    def test_area_for(self, experiment: str) -> int:
        if self.test_area is not None:
            return self.test_area
        return DEFAULT_TEST_AREAS[experiment]

    def train_config(
        self, experiment: str, target: Target, **fields: Any  # noqa: ANN401
    ) -> TrainConfig:
        return TrainConfig.for_target(
            target,
            **{
                **self.overrides,
                "seed": self.seed,
                "test_area": self.test_area_for(experiment),
                **fields,
            },
        )


class _Experiment:
    """Accumulates rows and artifacts, then writes ``experiment.json``."""

    def __init__(self, name: str, settings: ExperimentSettings) -> None:
        self.name = name
        self.settings = settings
        self.root = Path(settings.out_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self.rows: list[dict[str, Any]] = []
        self.artifacts: list[str] = []

    def run(
        self,
        key: str,
        data_dir: Path,
        config: TrainConfig,
        labels: dict[str, Any] | None = None,
    ) -> Path:
        run_dir = self.root / key
        logger.info("%s: training %s", self.name, key)
        train(
            data_dir,
            config,
            run_dir,
            loss_config=self.settings.loss,
            progress=self.settings.progress,
        )
        self.rows.append(
            {"key": key, "target": config.target, "run": key, "labels": labels or {}}
        )
        if self.settings.plots:
            self.plot(loss_curves_figure(_curves(run_dir), key), f"{key}/loss")
        return run_dir

    def plot(self, fig: go.Figure, name: str) -> None:
        path = save_figure(fig, self.root / "plots" / name.replace("/", "_"))
        if path is not None:
            self.artifacts.append(str(path.relative_to(self.root)))

    def finish(self, config: dict[str, Any]) -> ExperimentReport:
        plan = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "experiment": self.name,
            "config": config,
            "rows": self.rows,
            "artifacts": self.artifacts,
        }
        (self.root / EXPERIMENT_FILE).write_text(
            json.dumps(plan, indent=2, sort_keys=True), encoding="utf-8"
        )
        report = build_report(self.root)
        write_report(report, self.root)
        return report


def _curves(run_dir: Path) -> pd.DataFrame:
    return pd.read_csv(run_dir / CURVES)


def _predictions(run_dir: Path) -> pd.DataFrame:
    return pd.read_csv(run_dir / "predictions.csv", dtype={"snapshot_id": str})


def dataset_variant(data_dir: Path, variant: str = "raw") -> Path:
    """Resolve a dataset directory or a ``gen-data`` root holding ``variant``."""
    data_dir = Path(data_dir)
    if (data_dir / "manifest.json").exists():
        return data_dir
    return data_dir / variant


def _echo(settings: ExperimentSettings, **extra: Any) -> dict[str, Any]:  # noqa: ANN401
    return {
        "data_dir": str(settings.data_dir),
        "seed": settings.seed,
        "overrides": settings.overrides,
        "loss": settings.loss.model_dump(mode="json"),
        **extra,
    }


def _scalar_targets(settings: ExperimentSettings) -> tuple[Target, ...]:
    chosen = settings.targets or SCALAR_TARGETS
    return tuple(t for t in chosen if t != "aps")


def _trace_plot(exp: _Experiment, run_dir: Path, key: str) -> None:
    frame = _predictions(run_dir)
    unit = str(frame["unit"].iloc[0]) if len(frame) else ""
    exp.plot(prediction_trace_figure(frame, unit, key), f"{key}/trace")


# ─── Experiment 1: modality ablation ─────────────────────────────────────────


def run_modality_ablation(settings: ExperimentSettings) -> ExperimentReport:
    """Train the four modality combinations for every scalar target."""
    exp = _Experiment("exp1", settings)
    data_dir = dataset_variant(settings.data_dir, "raw")
    for target in _scalar_targets(settings):
        for combo in MODALITY_COMBOS:
            name = "+".join(combo)
            key = f"{target}/{name}"
            config = settings.train_config("exp1", target, modalities=combo)
            run_dir = exp.run(key, data_dir, config, {"modalities": name})
            if settings.plots:
                _trace_plot(exp, run_dir, key)
    return exp.finish(_echo(settings, test_area=settings.test_area_for("exp1")))


# ─── Experiment 2: dynamic-scatterer removal ─────────────────────────────────


def check_paired(raw_dir: Path, masked_dir: Path) -> None:
    """Raise :class:`UnpairedDatasetError` unless both variants share ids."""
    raw = read_manifest(raw_dir)
    masked = read_manifest(masked_dir)
    if raw.snapshot_ids != masked.snapshot_ids:
        only_raw = sorted(set(raw.snapshot_ids) - set(masked.snapshot_ids))
        only_masked = sorted(set(masked.snapshot_ids) - set(raw.snapshot_ids))
        msg = (
            f"{raw_dir} and {masked_dir} do not share snapshot ids "
            f"({len(only_raw)} raw-only, {len(only_masked)} masked-only)"
        )
        raise UnpairedDatasetError(msg)
    if not masked.masked or raw.masked:
        msg = f"{masked_dir} is not the masked variant of {raw_dir}"
        raise UnpairedDatasetError(msg)


def run_dynamic_removal(settings: ExperimentSettings) -> ExperimentReport:
    """Train identical trimodal models on the raw and the masked variant."""
    exp = _Experiment("exp2", settings)
    root = Path(settings.data_dir)
    variants = {"raw": root / "raw", "masked": root / "masked"}
    check_paired(variants["raw"], variants["masked"])
    for target in _scalar_targets(settings):
        config = settings.train_config("exp2", target)
        curves = {}
        for variant, data_dir in variants.items():
            key = f"{target}/{variant}"
            run_dir = exp.run(key, data_dir, config, {"variant": variant})
            curves[variant] = _curves(run_dir)
        if settings.plots:
            exp.plot(
                error_curves_figure(curves, title=f"{target}: raw vs masked"),
                f"{target}/curves",
            )
    return exp.finish(_echo(settings, test_area=settings.test_area_for("exp2")))


# ─── Experiment 3: backbone sweep ────────────────────────────────────────────


def record_complexity(run_dir: Path, image_size: int) -> dict[str, Any]:
    """Count parameters, FLOPs and latency of a run's model into the run dir."""
    model = restore_model(load_checkpoint(run_dir / CHECKPOINT_NAME))
    total, trainable = count_params(model)
    latency = measure_latency(
        model, LATENCY_BATCH, LATENCY_REPETITIONS, image_size=image_size
    )
    record = {
        "params": total,
        "trainable_params": trainable,
        "flops": estimate_flops(model, image_size),
        "latency_ms": latency.mean_ms,
        "samples_per_s": latency.samples_per_s,
        "latency_batch": latency.batch_size,
        "hardware": latency.hardware,
    }
    (run_dir / COMPLEXITY_FILE).write_text(
        json.dumps(record, indent=2, sort_keys=True), encoding="utf-8"
    )
    return record


def run_backbone_sweep(
    settings: ExperimentSettings, backbones: Sequence[str] = SWEEP_BACKBONES
) -> ExperimentReport:
    """Train one semantic-backbone variant per id and account its complexity.

    Raises
    ------
    UnknownBackboneError
        Before any training, if an id is not registered.
    """
    unknown = [name for name in backbones if name not in BACKBONES]
    if unknown:
        msg = f"unknown backbone(s) {unknown}; known: {', '.join(BACKBONES)}"
        raise UnknownBackboneError(msg)
    exp = _Experiment("exp3", settings)
    data_dir = dataset_variant(settings.data_dir, "raw")
    image_size = read_manifest(data_dir).image_size
    targets = settings.targets or ("pl",)
    for target in targets:
        for name in backbones:
            key = f"{target}/{name}"
            config = settings.train_config("exp3", target, backbone=name)
            run_dir = exp.run(key, data_dir, config, {"backbone": name})
            record_complexity(run_dir, image_size)
    return exp.finish(
        _echo(
            settings,
            test_area=settings.test_area_for("exp3"),
            backbones=list(backbones),
        )
    )


# ─── Experiment 4: APS prediction ────────────────────────────────────────────


def overlay_rows(frame: pd.DataFrame, count: int = OVERLAY_COUNT) -> list[int]:
    """Evenly spaced row positions over the test trajectory."""
    if frame.empty:
        return []
    return sorted({int(i) for i in np.linspace(0, len(frame) - 1, count)})


def run_aps_eval(settings: ExperimentSettings) -> ExperimentReport:
    """Train the APS model and summarise its cosine distribution."""
    exp = _Experiment("exp4", settings)
    data_dir = dataset_variant(settings.data_dir, "raw")
    config = settings.train_config("exp4", "aps")
    run_dir = exp.run("aps", data_dir, config)
    if settings.plots:
        frame = _predictions(run_dir).sort_values(
            ["area_id", "timestamp_s"], kind="stable"
        )
        targets = frame[TARGET_COLUMNS].to_numpy(dtype=np.float64)
        preds = frame[PREDICTION_COLUMNS].to_numpy(dtype=np.float64)
        summary = cosine_distribution(row_cosines(targets, preds))
        exp.plot(cosine_histogram_figure(summary, "APS cosine similarity"), "aps/hist")
        for pos in overlay_rows(frame):
            sid = str(frame["snapshot_id"].iloc[pos])
            exp.plot(
                aps_overlay_figure(targets[pos], preds[pos], sid),
                f"aps/overlay_{sid}",
            )
    return exp.finish(_echo(settings, test_area=settings.test_area_for("exp4")))


EXPERIMENTS = {
    "exp1": run_modality_ablation,
    "exp2": run_dynamic_removal,
    "exp3": run_backbone_sweep,
    "exp4": run_aps_eval,
}

