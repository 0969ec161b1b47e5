from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np
import pytest

from v2i_chanpred.channel_stats import read_mpc_jsonl
from v2i_chanpred.config import DatasetConfig
from v2i_chanpred.config import SceneConfig
from v2i_chanpred.datagen import area_scene_config
from v2i_chanpred.datagen import area_seed
from v2i_chanpred.datagen import generate_dataset
from v2i_chanpred.dataset_io import read_dataset
from v2i_chanpred.dataset_io import read_drops

if TYPE_CHECKING:
    from pathlib import Path


@pytest.fixture
def dataset_config(small_scene_config: SceneConfig) -> DatasetConfig:
    return DatasetConfig(
        seed=5, areas=2, snapshots_per_area=6, image_size=32, scene=small_scene_config
    )


def test_area_seeds_are_distinct() -> None:
    seeds = {area_seed(0, a) for a in range(1, 5)}
    assert len(seeds) == 4
    assert area_seed(0, 1) == area_seed(0, 1)
    assert area_seed(1, 1) != area_seed(0, 1)


def test_area_scene_config(dataset_config: DatasetConfig) -> None:
    second = area_scene_config(dataset_config, 2)
    assert second.area_id == 2
    assert second.tx_height_m == 34.0
    assert second.tx_xy_m == pytest.approx((0.35 * 240.0, 110.0))
    assert second.extent_m == (240.0, 120.0)


def test_per_area_lists_must_cover_every_area() -> None:
    with pytest.raises(ValueError, match="one entry per area"):
        DatasetConfig(areas=5)


def test_generated_variants(dataset_config: DatasetConfig, tmp_path: Path) -> None:
    manifests = generate_dataset(dataset_config, tmp_path)
    raw, masked = manifests["raw"], manifests["masked"]
    assert raw.snapshot_ids == masked.snapshot_ids
    assert masked.masked
    assert not raw.masked
    drops = read_drops(tmp_path / "raw")
    assert raw.sample_count + len(drops) == 12
    assert set(drops["rule"]) <= {"sync", "low_power", "gps_jump", "stop"}
    assert (tmp_path / "scene_1.json").exists()
    assert (tmp_path / "scene_2.json").exists()
    mpcs = read_mpc_jsonl(tmp_path / "raw" / "mpcs.jsonl")
    assert [m.snapshot_id for m in mpcs] == raw.snapshot_ids

    samples, _ = read_dataset(tmp_path / "raw")
    masked_samples, _ = read_dataset(tmp_path / "masked")
    for a, b in zip(samples, masked_samples, strict=True):
        assert a.semantic_in.shape == (3, 32, 32)
        assert a.labels.pl_db == b.labels.pl_db
        np.testing.assert_array_equal(a.labels.aps, b.labels.aps)
        assert tuple(a.rx_geo) == tuple(b.rx_geo)
        assert float(a.labels.aps.max()) == 1.0
    assert {s.area_id for s in samples} <= {1, 2}


def test_generation_is_deterministic(
    dataset_config: DatasetConfig, tmp_path: Path
) -> None:
    first = generate_dataset(dataset_config, tmp_path / "a")
    second = generate_dataset(dataset_config, tmp_path / "b")
    assert first["raw"].content_hash == second["raw"].content_hash
    assert first["masked"].content_hash == second["masked"].content_hash
    assert first["raw"].sample_count == second["raw"].sample_count
