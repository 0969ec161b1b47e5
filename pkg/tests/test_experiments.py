from __future__ import annotations

import json
from typing import TYPE_CHECKING

import pandas as pd
import pytest

from conftest import make_samples
from v2i_chanpred.config import DatasetConfig
from v2i_chanpred.datagen import generate_dataset
from v2i_chanpred.dataset_io import write_dataset
from v2i_chanpred.errors import UnknownBackboneError
from v2i_chanpred.errors import UnpairedDatasetError
from v2i_chanpred.experiments import DEFAULT_TEST_AREAS
from v2i_chanpred.experiments import ExperimentSettings
from v2i_chanpred.experiments import check_paired
from v2i_chanpred.experiments import dataset_variant
from v2i_chanpred.experiments import overlay_rows
from v2i_chanpred.experiments import run_aps_eval
from v2i_chanpred.experiments import run_backbone_sweep
from v2i_chanpred.experiments import run_dynamic_removal
from v2i_chanpred.experiments import run_modality_ablation
from v2i_chanpred.reporting import EXPERIMENT_FILE

if TYPE_CHECKING:
    from pathlib import Path

QUICK = {"max_epochs": 1, "batch_size": 4, "backbone": "compact-conv"}


def settings(data_dir: Path, out_dir: Path, **fields: object) -> ExperimentSettings:
    return ExperimentSettings(
        data_dir=data_dir,
        out_dir=out_dir,
        overrides=dict(QUICK),
        plots=False,
        progress=False,
        **fields,  # type: ignore[arg-type]
    )


@pytest.fixture
def paired_root(tmp_path: Path) -> Path:
    root = tmp_path / "gen"
    write_dataset(make_samples(), root / "raw", seeds=[0])
    write_dataset(make_samples(), root / "masked", masked=True, seeds=[0])
    return root


def test_dataset_variant(tiny_dataset: Path, paired_root: Path) -> None:
    assert dataset_variant(tiny_dataset, "masked") == tiny_dataset
    assert dataset_variant(paired_root) == paired_root / "raw"
    assert dataset_variant(paired_root, "masked") == paired_root / "masked"


def test_default_test_areas(tmp_path: Path) -> None:
    chosen = settings(tmp_path, tmp_path)
    assert {e: chosen.test_area_for(e) for e in DEFAULT_TEST_AREAS} == {
        "exp1": 4,
        "exp2": 1,
        "exp3": 2,
        "exp4": 4,
    }
    assert settings(tmp_path, tmp_path, test_area=3).test_area_for("exp2") == 3
    config = chosen.train_config("exp3", "pl", backbone="vgg16")
    assert (config.test_area, config.backbone, config.max_epochs) == (2, "vgg16", 1)


def test_paired_variants(paired_root: Path) -> None:
    check_paired(paired_root / "raw", paired_root / "masked")


def test_unpaired_ids(tmp_path: Path) -> None:
    write_dataset(make_samples(), tmp_path / "raw")
    write_dataset(make_samples(per_area=4), tmp_path / "masked", masked=True)
    with pytest.raises(UnpairedDatasetError, match="do not share snapshot ids"):
        check_paired(tmp_path / "raw", tmp_path / "masked")


def test_masked_flag_is_checked(tmp_path: Path) -> None:
    write_dataset(make_samples(), tmp_path / "raw")
    write_dataset(make_samples(), tmp_path / "masked")
    with pytest.raises(UnpairedDatasetError, match="not the masked variant"):
        check_paired(tmp_path / "raw", tmp_path / "masked")


def test_overlay_rows() -> None:
    assert overlay_rows(pd.DataFrame()) == []
    assert overlay_rows(pd.DataFrame({"a": range(10)})) == [0, 3, 6, 9]
    assert overlay_rows(pd.DataFrame({"a": range(2)})) == [0, 1]


def test_unknown_backbone_fails_before_training(
    tiny_dataset: Path, tmp_path: Path
) -> None:
    out = tmp_path / "exp3"
    with pytest.raises(UnknownBackboneError, match="'resnet-999'"):
        run_backbone_sweep(settings(tiny_dataset, out), ["compact-conv", "resnet-999"])
    assert not out.exists()


def test_modality_ablation(tiny_dataset: Path, tmp_path: Path) -> None:
    out = tmp_path / "exp1"
    report = run_modality_ablation(settings(tiny_dataset, out, targets=("pl",)))
    assert list(report.table["key"]) == [
        "pl/semantic+depth+location",
        "pl/semantic+depth",
        "pl/semantic+location",
        "pl/semantic",
    ]
    assert set(report.table["count"]) == {5}
    assert report.table["best_rmse"].sum() >= 1
    plan = json.loads((out / EXPERIMENT_FILE).read_text())
    assert plan["config"]["test_area"] == 4
    assert (out / "report.csv").exists()


def test_dynamic_removal(paired_root: Path, tmp_path: Path) -> None:
    report = run_dynamic_removal(
        settings(paired_root, tmp_path / "exp2", targets=("ds",))
    )
    assert list(report.table["variant"]) == ["raw", "masked"]
    # area 1 is held out
    assert set(report.table["count"]) == {5}


def test_backbone_sweep_records_complexity(tiny_dataset: Path, tmp_path: Path) -> None:
    out = tmp_path / "exp3"
    report = run_backbone_sweep(settings(tiny_dataset, out), ["compact-conv"])
    (row,) = report.table.to_dict(orient="records")
    assert row["key"] == "pl/compact-conv"
    assert row["params"] >= row["trainable_params"] > 0
    assert row["flops"] > 0
    assert row["latency_batch"] == 2
    assert (out / "pl" / "compact-conv" / "complexity.json").exists()


def test_aps_experiment(tiny_dataset: Path, tmp_path: Path) -> None:
    report = run_aps_eval(settings(tiny_dataset, tmp_path / "exp4"))
    (row,) = report.table.to_dict(orient="records")
    assert row["target"] == "aps"
    assert -1.0 <= row["cos_min"] <= row["cos_mean"] <= row["cos_max"] <= 1.0


ABLATION = {"backbone": "compact-conv", "batch_size": 16, "max_epochs": 40}


@pytest.fixture(scope="module")
def generated_root(tmp_path_factory: pytest.TempPathFactory) -> Path:
    root = tmp_path_factory.mktemp("generated")
    generate_dataset(DatasetConfig(seed=0, image_size=32), root)
    return root


@pytest.mark.slow
def test_more_modalities_lower_the_path_loss_error(
    generated_root: Path, tmp_path: Path
) -> None:
    rmse: dict[int, dict[str, float]] = {}
    for seed in range(3):
        report = run_modality_ablation(
            ExperimentSettings(
                data_dir=generated_root,
                out_dir=tmp_path / f"seed{seed}",
                seed=seed,
                targets=("pl",),
                overrides=dict(ABLATION),
                plots=False,
                progress=False,
            )
        )
        rmse[seed] = dict(zip(report.table["key"], report.table["rmse"], strict=True))
    dual = ("pl/semantic+depth", "pl/semantic+location")
    full_wins = sum(
        rmse[s]["pl/semantic+depth+location"] <= rmse[s][k] for s in rmse for k in dual
    )
    dual_wins = sum(rmse[s][k] <= rmse[s]["pl/semantic"] for s in rmse for k in dual)
    assert full_wins >= 4
    assert dual_wins >= 4


@pytest.mark.slow
def test_aps_cosine_on_the_held_out_area(generated_root: Path, tmp_path: Path) -> None:
    report = run_aps_eval(
        ExperimentSettings(
            data_dir=generated_root,
            out_dir=tmp_path / "exp4",
            overrides=dict(ABLATION),
            plots=False,
            progress=False,
        )
    )
    (row,) = report.table.to_dict(orient="records")
    assert row["cos_mean"] >= 0.85
