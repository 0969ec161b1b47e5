"""Experiment reports rebuilt from run directories.

An experiment directory holds ``experiment.json``::

    {
      "schema_version": 1,
      "experiment": "exp1",
      "config": {...},
      "rows": [{"key": "pl/semantic", "target": "pl", "run": "pl/semantic",
                "labels": {"modalities": "semantic"}}, ...],
      "artifacts": ["plots/..."]
    }

:func:`build_report` recomputes every metric from each run's ``predictions.csv``
(and ``complexity.json`` when present); it reads files only, so regenerating a
report reproduces it digit for digit. A plain run directory (no
``experiment.json``) is reported as a single row.

``report.csv`` columns: ``key, target, <labels>, unit, count, rmse, mae``,
APS cosine columns ``cos_mean, cos_median, cos_std, cos_min, cos_max``,
complexity columns when present, and ``best_rmse, best_mae`` (plus
``best_cosine`` for APS) marking the best row per target.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from dataclasses import field
from pathlib import Path
from typing import Any
from typing import Literal

import pandas as pd

from v2i_chanpred.errors import ReportError
from v2i_chanpred.evaluation import compute_metrics
from v2i_chanpred.training import CONFIG_ECHO
from v2i_chanpred.training import CURVES

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
EXPERIMENT_FILE = "experiment.json"
COMPLEXITY_FILE = "complexity.json"
CURVE_COLUMNS = ["epoch", "train_loss", "val_loss", "train_error", "val_error"]


@dataclass(frozen=True)
class ExperimentReport:
    experiment: str
    config: dict[str, Any]
    table: pd.DataFrame
    curves: dict[str, dict[str, list[float]]] = field(default_factory=dict)
    artifacts: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "experiment": self.experiment,
            "config": self.config,
            "rows": self.table.to_dict(orient="records"),
            "curves": self.curves,
            "artifacts": self.artifacts,
        }


def _read_json(path: Path) -> dict[str, Any]:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        msg = f"cannot read {path}: {exc}"
        raise ReportError(msg) from exc
    if not isinstance(data, dict):
        msg = f"{path} does not hold a JSON object"
        raise ReportError(msg)
    return data


def _single_run_plan(run_dir: Path) -> dict[str, Any]:
    echo = _read_json(run_dir / CONFIG_ECHO)
    target = echo["train"]["target"]
    return {
        "experiment": "run",
        "config": echo,
        "rows": [{"key": target, "target": target, "run": ".", "labels": {}}],
        "artifacts": [],
    }


def run_row(run_dir: Path, target: str) -> dict[str, Any]:
    """Metrics (and complexity, if recorded) of one run directory."""
    path = run_dir / "predictions.csv"
    try:
        frame = pd.read_csv(path, dtype={"snapshot_id": str})
    except OSError as exc:
        msg = f"cannot read {path}: {exc}"
        raise ReportError(msg) from exc
    metrics = compute_metrics(frame, target)
    row: dict[str, Any] = {
        "unit": metrics["unit"],
        "count": metrics["count"],
        "rmse": metrics["rmse"],
        "mae": metrics["mae"],
    }
    if "cosine" in metrics:
        cos = metrics["cosine"]
        for stat in ("mean", "median", "std", "min", "max"):
            row[f"cos_{stat}"] = cos[stat]
    complexity = run_dir / COMPLEXITY_FILE
    if complexity.exists():
        row.update(_read_json(complexity))
    return row


def mark_best(table: pd.DataFrame) -> pd.DataFrame:
    """Flag the best row per target: lowest RMSE and MAE, highest mean cosine."""
    out = table.copy()
    groups = out.groupby("target")
    out["best_rmse"] = out["rmse"] == groups["rmse"].transform("min")
    out["best_mae"] = out["mae"] == groups["mae"].transform("min")
    if "cos_mean" in out.columns:
        best_cos = groups["cos_mean"].transform("max")
        out["best_cosine"] = out["cos_mean"].notna() & (out["cos_mean"] == best_cos)
    return out


def build_report(exp_dir: Path) -> ExperimentReport:
    """Rebuild the report of an experiment (or single run) directory."""
    exp_dir = Path(exp_dir)
    plan_path = exp_dir / EXPERIMENT_FILE
    plan = _read_json(plan_path) if plan_path.exists() else _single_run_plan(exp_dir)
    rows = []
    curves: dict[str, dict[str, list[float]]] = {}
    for entry in plan["rows"]:
        run_dir = exp_dir / entry["run"]
        rows.append(
            {
                "key": entry["key"],
                "target": entry["target"],
                **entry.get("labels", {}),
                **run_row(run_dir, entry["target"]),
            }
        )
        curve_path = run_dir / CURVES
        if curve_path.exists():
            df = pd.read_csv(curve_path)
            cols = [c for c in CURVE_COLUMNS if c in df.columns]
            curves[entry["key"]] = {c: df[c].tolist() for c in cols}
    if not rows:
        msg = f"{exp_dir} lists no runs"
        raise ReportError(msg)
    return ExperimentReport(
        experiment=str(plan["experiment"]),
        config=dict(plan.get("config", {})),
        table=mark_best(pd.DataFrame(rows)),
        curves=curves,
        artifacts=list(plan.get("artifacts", [])),
    )


def write_report(
    report: ExperimentReport,
    out_dir: Path,
    formats: tuple[Literal["json", "csv"], ...] = ("json", "csv"),
) -> list[Path]:
    out_dir = Path(out_dir)
    written = []
    if "json" in formats:
        path = out_dir / "report.json"
        path.write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True), encoding="utf-8"
        )
        written.append(path)
    if "csv" in formats:
        path = out_dir / "report.csv"
        report.table.to_csv(path, index=False)
        written.append(path)
    for path in written:
        logger.info("report written to %s", path)
    return written
