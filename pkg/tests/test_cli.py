from __future__ import annotations

import json
from typing import TYPE_CHECKING

import pytest

from v2i_chanpred.cli import build_parser
from v2i_chanpred.cli import main

if TYPE_CHECKING:
    from pathlib import Path


def test_unknown_command() -> None:
    with pytest.raises(SystemExit) as info:
        main(["exp9"])
    assert info.value.code == 2


def test_bad_modalities() -> None:
    with pytest.raises(SystemExit) as info:
        main(["train", "--modalities", "semantic,lidar"])
    assert info.value.code == 2


def test_parser_reads_lists() -> None:
    args = build_parser().parse_args(
        ["exp3", "--backbone", "compact-conv, vgg16", "--modalities", "depth,semantic"]
    )
    assert args.backbone == ("compact-conv", "vgg16")
    assert args.modalities == ("depth", "semantic")
    assert args.plots


def test_eval_without_run(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    code = main(["eval", "--out", str(tmp_path / "missing"), "--data", str(tmp_path)])
    assert code == 1
    assert capsys.readouterr().err.startswith(
        "error: CheckpointNotFoundError: checkpoint not found"
    )


def test_report_needs_out(capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["report"]) == 1
    assert "error: ConfigError: report needs --out" in capsys.readouterr().err


def test_unreadable_config(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    path = tmp_path / "config.json"
    path.write_text("{not json")
    assert main(["train", "--config", str(path)]) == 1
    assert "error: ConfigError: cannot load config" in capsys.readouterr().err


def test_invalid_train_override(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"train": {"batch_size": 0}}))
    assert main(["train", "--config", str(path), "--data", str(tmp_path)]) == 1
    assert "invalid training settings" in capsys.readouterr().err


def test_train_eval_report(
    tiny_dataset: Path, tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    config = tmp_path / "config.json"
    config.write_text(
        json.dumps(
            {"train": {"max_epochs": 1, "batch_size": 4, "backbone": "compact-conv"}}
        )
    )
    run_dir = tmp_path / "run"
    common = ["--config", str(config), "--data", str(tiny_dataset)]
    common += ["--out", str(run_dir)]
    assert main(["train", "--target", "ds", *common]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["epochs"] == 1
    assert out["metrics"]["unit"] == "ns"

    assert main(["eval", "--split", "val", *common]) == 0
    assert json.loads(capsys.readouterr().out)["count"] == 3

    assert main(["report", "--out", str(run_dir), "--format", "csv"]) == 0
    assert json.loads(capsys.readouterr().out) == {
        "written": [str(run_dir / "report.csv")]
    }
