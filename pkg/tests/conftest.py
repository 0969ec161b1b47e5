from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from v2i_chanpred.channel_stats import Mpc
from v2i_chanpred.channel_stats import MpcSet
from v2i_chanpred.channel_stats import labels_from_mpcs
from v2i_chanpred.config import SceneConfig
from v2i_chanpred.dataset_io import Sample
from v2i_chanpred.dataset_io import write_dataset
from v2i_chanpred.scene import Building
from v2i_chanpred.scene import Dynamic
from v2i_chanpred.scene import RxPose
from v2i_chanpred.scene import Scene
from v2i_chanpred.scene import Transmitter


def make_scene(
    buildings: tuple[Building, ...] = (),
    dynamics: tuple[Dynamic, ...] = (),
    tx: tuple[float, float, float] = (300.0, 185.0, 33.0),
    config: SceneConfig | None = None,
) -> Scene:
    """Hand-built scene; geometry is free of the generator's placement rules."""
    config = config or SceneConfig()
    return Scene(
        area_id=config.area_id,
        seed=config.seed,
        extent_m=config.extent_m,
        road=(),
        buildings=buildings,
        dynamics=dynamics,
        tx=Transmitter(*tx),
        origin=(0.0, 0.0),
        config=config,
    )


def pose(x: float = 0.0, y: float = 0.0, heading: float = 0.0) -> RxPose:
    return RxPose(x=x, y=y, heading_deg=heading, height_m=2.7, timestamp_s=0.0)


@pytest.fixture
def small_scene_config() -> SceneConfig:
    return SceneConfig(
        seed=11,
        extent_m=(240.0, 120.0),
        road_width_m=16.0,
        building_count=(3, 5),
        building_width_m=(12.0, 25.0),
        building_depth_m=(8.0, 20.0),
        vehicle_count=(1, 2),
        pedestrian_count=(1, 2),
        tx_xy_m=(120.0, 110.0),
    )


def make_sample(index: int, area_id: int, size: int = 32, seed: int = 0) -> Sample:
    """Random but valid sample; the receiver drifts east with ``index``."""
    rng = np.random.default_rng([seed, area_id, index])
    n = int(rng.integers(1, 6))
    mpcs = MpcSet(
        tuple(
            Mpc(
                amplitude=float(rng.uniform(1e-4, 1e-2)),
                phase=float(rng.uniform(0.0, 6.0)),
                delay_ns=float(rng.uniform(100.0, 900.0)),
                aod_deg=float(rng.uniform(0.0, 359.0)),
                aoa_deg=float(rng.uniform(0.0, 359.0)),
            )
            for _ in range(n)
        )
    )
    return Sample(
        snapshot_id=f"a{area_id}-{index:05d}",
        area_id=area_id,
        semantic_in=rng.random((3, size, size), dtype=np.float32),
        depth_in=rng.random((3, size, size), dtype=np.float32),
        tx_geo=(39.95, 116.34),
        rx_geo=(39.9490, 116.3390 + 1e-5 * index),
        labels=labels_from_mpcs(mpcs),
        timestamp_s=0.5 * index,
    )


def make_samples(
    per_area: int = 5, areas: tuple[int, ...] = (1, 2, 3, 4), size: int = 32
) -> list[Sample]:
    return [make_sample(i, a, size) for a in areas for i in range(per_area)]


@pytest.fixture
def tiny_dataset(tmp_path: Path) -> Path:
    directory = tmp_path / "data"
    write_dataset(make_samples(), directory, seeds=[0])
    return directory
