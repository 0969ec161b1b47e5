"""Command line entry point.

Subcommands: ``gen-data``, ``train``, ``eval``, ``exp1`` .. ``exp4`` and
``report``. Any :class:`ChanPredError` becomes one stderr line
``error: <ClassName>: <message>`` and exit code 1; usage errors exit 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import TYPE_CHECKING
from typing import Any

from pydantic import ValidationError

from v2i_chanpred.config import ALL_MODALITIES
from v2i_chanpred.config import DatasetConfig
from v2i_chanpred.config import FileConfig
from v2i_chanpred.config import TrainConfig
from v2i_chanpred.config import load_config
from v2i_chanpred.datagen import generate_dataset
from v2i_chanpred.errors import ChanPredError
from v2i_chanpred.errors import ConfigError
from v2i_chanpred.evaluation import evaluate
from v2i_chanpred.experiments import EXPERIMENTS
from v2i_chanpred.experiments import SWEEP_BACKBONES
from v2i_chanpred.experiments import ExperimentSettings
from v2i_chanpred.experiments import dataset_variant
from v2i_chanpred.experiments import run_backbone_sweep
from v2i_chanpred.reporting import build_report
from v2i_chanpred.reporting import write_report
from v2i_chanpred.training import train

if TYPE_CHECKING:
    from collections.abc import Sequence

logger = logging.getLogger(__name__)

TARGETS = ("pl", "ds", "asa", "asd", "aps")


def _modalities(value: str) -> tuple[str, ...]:
    items = tuple(v.strip() for v in value.split(",") if v.strip())
    unknown = [v for v in items if v not in ALL_MODALITIES]
    if not items or unknown:
        msg = f"expected a comma list of {', '.join(ALL_MODALITIES)}, got {value!r}"
        raise argparse.ArgumentTypeError(msg)
    return items


def _backbones(value: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in value.split(",") if v.strip())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file")
    common.add_argument("--data", type=Path, default=Path("data"), help="dataset dir")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--target", choices=TARGETS)
    common.add_argument("--seed", type=int)
    common.add_argument("--test-area", type=int, dest="test_area")
    common.add_argument("--modalities", type=_modalities, help="e.g. semantic,depth")
    common.add_argument("--backbone", type=_backbones, help="backbone id(s)")
    common.add_argument("--format", choices=("json", "csv"), dest="fmt")
    common.add_argument(
        "--plots", action=argparse.BooleanOptionalAction, default=True
    )

    parser = argparse.ArgumentParser(
        prog="v2i-chanpred",
        description="Environment-aware V2I channel prediction",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="generate a synthetic dataset")
    sub.add_parser("train", parents=[common], help="train one model")
    ev = sub.add_parser("eval", parents=[common], help="evaluate a run directory")
    ev.add_argument("--split", choices=("train", "val", "test"), default="test")
    for name, fn in EXPERIMENTS.items():
        sub.add_parser(name, parents=[common], help=(fn.__doc__ or "").split("\n")[0])
    sub.add_parser("report", parents=[common], help="rebuild an experiment report")
    return parser


def _train_overrides(args: argparse.Namespace, cfg: FileConfig) -> dict[str, Any]:
    overrides = dict(cfg.train)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.test_area is not None:
        overrides["test_area"] = args.test_area
    if args.modalities is not None:
        overrides["modalities"] = args.modalities
    if args.backbone:
        overrides["backbone"] = args.backbone[0]
    return overrides


def _train_config(target: str, overrides: dict[str, Any]) -> TrainConfig:
    try:
        return TrainConfig.for_target(target, **overrides)  # type: ignore[arg-type]
    except ValidationError as exc:
        msg = f"invalid training settings: {exc}".replace("\n", " ")
        raise ConfigError(msg) from exc


def _emit(payload: object) -> None:
    sys.stdout.write(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")


# ─── Commands ────────────────────────────────────────────────────────────────


def cmd_gen_data(args: argparse.Namespace, cfg: FileConfig) -> None:
    dataset = cfg.dataset
    if args.seed is not None:
        try:
            dataset = DatasetConfig.model_validate(
                {**dataset.model_dump(), "seed": args.seed}
            )
        except ValidationError as exc:
            msg = f"invalid dataset seed: {exc}".replace("\n", " ")
            raise ConfigError(msg) from exc
    out = args.out or Path("data")
    manifests = generate_dataset(dataset, out)
    _emit(
        {
            variant: {
                "dir": str(out / variant),
                "samples": m.sample_count,
                "content_hash": m.content_hash,
            }
            for variant, m in manifests.items()
        }
    )


def cmd_train(args: argparse.Namespace, cfg: FileConfig) -> None:
    target = args.target or "pl"
    config = _train_config(target, _train_overrides(args, cfg))
    out = args.out or Path("runs") / target
    result = train(dataset_variant(args.data), config, out, loss_config=cfg.loss)
    _emit(
        {
            "run_dir": str(result.run_dir),
            "epochs": result.epochs_run,
            "best_epoch": result.best_epoch,
            "metrics": result.metrics,
        }
    )


def cmd_eval(args: argparse.Namespace, _cfg: FileConfig) -> None:
    run_dir = args.out or Path("runs") / (args.target or "pl")
    _emit(evaluate(run_dir, dataset_variant(args.data), args.split, args.target))


def cmd_experiment(args: argparse.Namespace, cfg: FileConfig) -> None:
    overrides = _train_overrides(args, cfg)
    seed = int(overrides.pop("seed", 0))
    test_area = overrides.pop("test_area", None)
    backbones = args.backbone
    if args.command == "exp3":
        overrides.pop("backbone", None)
    settings = ExperimentSettings(
        data_dir=args.data,
        out_dir=args.out or Path("experiments") / args.command,
        seed=seed,
        test_area=test_area,
        targets=(args.target,) if args.target else None,
        overrides=overrides,
        loss=cfg.loss,
        plots=args.plots,
    )
    if args.command == "exp3":
        report = run_backbone_sweep(settings, backbones or SWEEP_BACKBONES)
    else:
        report = EXPERIMENTS[args.command](settings)
    _emit(report.table.to_dict(orient="records"))


def cmd_report(args: argparse.Namespace, _cfg: FileConfig) -> None:
    if args.out is None:
        msg = "report needs --out pointing at an experiment or run directory"
        raise ConfigError(msg)
    report = build_report(args.out)
    formats = (args.fmt,) if args.fmt else ("json", "csv")
    paths = write_report(report, args.out, formats)
    _emit({"written": [str(p) for p in paths]})


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "report": cmd_report,
    **dict.fromkeys(EXPERIMENTS, cmd_experiment),
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config)
        COMMANDS[args.command](args, cfg)
    except ChanPredError as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return 1
    return 0
