from __future__ import annotations

import math

import numpy as np
import pytest

from v2i_chanpred.config import SceneConfig
from v2i_chanpred.errors import SceneGenerationError
from v2i_chanpred.errors import TrajectoryError
from v2i_chanpred.geo import EARTH_RADIUS_M
from v2i_chanpred.geo import haversine_m
from v2i_chanpred.geo import to_geodetic
from v2i_chanpred.scene import generate_scene
from v2i_chanpred.scene import has_los
from v2i_chanpred.scene import rng_stream
from v2i_chanpred.scene import sample_trajectory
from v2i_chanpred.snapshots import make_snapshot
from v2i_chanpred.snapshots import snapshot_id


def test_rng_streams_are_independent_of_each_other() -> None:
    a = rng_stream(3, "buildings/1").random(4)
    rng_stream(3, "dynamics/1").random(100)
    np.testing.assert_array_equal(a, rng_stream(3, "buildings/1").random(4))
    assert not np.array_equal(a, rng_stream(3, "buildings/1", 1).random(4))


def test_same_seed_gives_identical_scenes() -> None:
    config = SceneConfig(seed=5)
    assert generate_scene(config) == generate_scene(config)
    assert generate_scene(config) != generate_scene(SceneConfig(seed=6))


@pytest.mark.parametrize("seed", range(10))
def test_generated_scenes_are_consistent(seed: int) -> None:
    config = SceneConfig(seed=seed)
    scene = generate_scene(config)
    width, length = config.extent_m
    road_lo, road_hi = config.road_bounds_y
    lo, hi = config.building_count
    assert lo <= len(scene.buildings) <= hi
    for i, b in enumerate(scene.buildings):
        assert 0 <= b.x0 < b.x1 <= width
        assert 0 <= b.y0 < b.y1 <= length
        assert b.y0 >= road_hi or b.y1 <= road_lo
        assert not b.contains(scene.tx.x, scene.tx.y)
        assert not any(b.overlaps(o) for o in scene.buildings[i + 1 :])
    for i, d in enumerate(scene.dynamics):
        for o in scene.dynamics[i + 1 :]:
            assert math.hypot(d.x - o.x, d.y - o.y) > d.radius_m + o.radius_m


def test_empty_building_range() -> None:
    scene = generate_scene(SceneConfig(building_count=(0, 0)))
    assert scene.buildings == ()
    assert has_los(scene, 10.0, 95.0)


def test_crowded_area_fails_with_the_constraint_named() -> None:
    config = SceneConfig(building_count=(10, 10), building_width_m=(190.0, 200.0))
    with pytest.raises(SceneGenerationError, match="without overlapping"):
        generate_scene(config)


def test_single_pose_trajectory() -> None:
    scene = generate_scene(SceneConfig())
    (only,) = sample_trajectory(scene, 1)
    assert only.timestamp_s == 0.0
    assert only.y == scene.config.rx_lane_y
    assert 0.0 <= only.x <= scene.extent_m[0]


def test_trajectory_respects_speed_cap() -> None:
    config = SceneConfig(seed=2)
    poses = sample_trajectory(generate_scene(config), 40)
    step = config.max_speed_mps * config.snapshot_interval_s
    xs = np.array([p.x for p in poses])
    assert np.all(np.diff(xs) > 0)
    assert np.all(np.diff(xs) <= step + 1e-9)
    times = np.array([p.timestamp_s for p in poses])
    np.testing.assert_allclose(np.diff(times), config.snapshot_interval_s)


def test_trajectories_mix_los_and_nlos() -> None:
    mixed = 0
    for seed in range(5):
        scene = generate_scene(SceneConfig(seed=seed))
        flags = {has_los(scene, p.x, p.y) for p in sample_trajectory(scene, 50)}
        mixed += flags == {True, False}
    assert mixed >= 1


@pytest.mark.parametrize("n", [0, 1000])
def test_impossible_trajectory(n: int) -> None:
    with pytest.raises(TrajectoryError):
        sample_trajectory(generate_scene(SceneConfig()), n)


def test_local_offsets_to_geodetic() -> None:
    assert to_geodetic((39.95, 116.34), (0.0, 0.0)) == (39.95, 116.34)
    lat, lon = to_geodetic((0.0, 0.0), (0.0, 111_195.0))
    assert lat == pytest.approx(1.0, abs=1e-4)
    assert lon == 0.0


def test_haversine_one_degree_of_latitude() -> None:
    expected = EARTH_RADIUS_M * math.pi / 180
    assert float(haversine_m(0.0, 0.0, 1.0, 0.0)) == pytest.approx(expected)
    assert expected == pytest.approx(111_195.0, abs=1.0)
    assert float(haversine_m(1.0, 0.0, 0.0, 0.0)) == float(haversine_m(0, 0, 1, 0))


def test_snapshot_ids() -> None:
    assert snapshot_id(3, 7) == "a3-00007"


def test_snapshot_timestamps(small_scene_config: SceneConfig) -> None:
    scene = generate_scene(small_scene_config)
    poses = sample_trajectory(scene, 5)
    for p in poses:
        snap = make_snapshot(scene, p)
        assert all(abs(t - p.timestamp_s) <= 0.04 + 1e-12 for t in snap.timestamps)

    still = small_scene_config.model_copy(update={"jitter_s": 0.0})
    snap = make_snapshot(scene, poses[2], still)
    assert snap.channel_s == snap.image_s == snap.gps_s == poses[2].timestamp_s


def test_snapshots_are_deterministic(small_scene_config: SceneConfig) -> None:
    scene = generate_scene(small_scene_config)
    p = sample_trajectory(scene, 3)[1]
    first, second = make_snapshot(scene, p), make_snapshot(scene, p)
    assert first.snapshot_id == second.snapshot_id == "a1-00001"
    assert first.mpcs == second.mpcs
    assert first.timestamps == second.timestamps
    np.testing.assert_array_equal(first.panorama.semantic, second.panorama.semantic)
    np.testing.assert_array_equal(first.panorama.depth, second.panorama.depth)
