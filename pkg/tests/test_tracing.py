from __future__ import annotations

import math

import numpy as np
import pytest
from conftest import make_scene
from conftest import pose
from hypothesis import assume
from hypothesis import given
from hypothesis import settings
from hypothesis import strategies as st

from v2i_chanpred.config import SceneConfig
from v2i_chanpred.scene import Building
from v2i_chanpred.scene import Dynamic
from v2i_chanpred.scene import generate_scene
from v2i_chanpred.scene import has_los
from v2i_chanpred.scene import sample_trajectory
from v2i_chanpred.tracing import SPEED_OF_LIGHT
from v2i_chanpred.tracing import candidate_paths
from v2i_chanpred.tracing import trace_mpcs
from v2i_chanpred.tracing import trace_paths


def test_free_space_single_path() -> None:
    scene = make_scene(tx=(0.0, 50.0, 2.7))
    mpcs = trace_mpcs(scene, pose(heading=90.0), snapshot_id="a1-00000")
    (only,) = mpcs.components
    assert only.delay_ns == pytest.approx(50.0 / SPEED_OF_LIGHT * 1e9)
    assert only.aoa_deg == pytest.approx(270.0)
    assert only.aod_deg == pytest.approx(180.0)
    assert mpcs.snapshot_id == "a1-00000"


def test_mirror_wall_adds_a_specular_path() -> None:
    wall = Building(-50.0, 20.0, 50.0, 30.0, height_m=15.0, loss_db=3.0)
    scene = make_scene(buildings=(wall,), tx=(0.0, 10.0, 2.7))
    paths = trace_paths(scene, pose(20.0, 10.0))
    assert [p.kind for p in paths] == ["los", "specular"]
    assert paths[0].length_m == pytest.approx(20.0)
    # image source at (0, 30)
    assert paths[1].length_m == pytest.approx(math.dist((0.0, 30.0), (20.0, 10.0)))
    assert paths[1].amplitude < paths[0].amplitude


def test_blocked_direct_path_is_kept_with_penetration_loss() -> None:
    wall = Building(-100.0, 20.0, 100.0, 30.0, height_m=15.0, loss_db=3.0)
    blocked = trace_paths(make_scene(buildings=(wall,), tx=(0.0, 50.0, 2.7)), pose())
    free = trace_paths(make_scene(tx=(0.0, 50.0, 2.7)), pose())
    (path,) = blocked
    assert path.kind == "penetration"
    penetration = SceneConfig().penetration_loss_db
    expected = free[0].amplitude * 10 ** (-penetration / 20)
    assert path.amplitude == pytest.approx(expected)


def test_static_paths_do_not_depend_on_dynamics(
    small_scene_config: SceneConfig,
) -> None:
    scene = generate_scene(small_scene_config)
    assert scene.dynamics
    for p in sample_trajectory(scene, 8):
        with_dyn = [t for t in trace_paths(scene, p) if t.kind != "scatter"]
        assert with_dyn == trace_paths(scene.without_dynamics(), p)


def test_selection_limits(small_scene_config: SceneConfig) -> None:
    config = small_scene_config.model_copy(update={"max_paths": 3})
    scene = generate_scene(config)
    for p in sample_trajectory(scene, 6):
        paths = trace_paths(scene, p)
        assert 1 <= len(paths) <= 3
        assert [t.length_m for t in paths] == sorted(t.length_m for t in paths)
        static = [t.power for t in paths if t.kind != "scatter"]
        floor = max(static) * 10 ** (-config.dynamic_range_db / 10)
        assert all(t.power >= floor for t in paths)


def test_dynamic_scatterers_only_take_leftover_slots() -> None:
    wall = Building(-50.0, 20.0, 50.0, 30.0, height_m=15.0, loss_db=12.0)
    car = Dynamic(10.0, 11.0, radius_m=2.0, height_m=1.6, kind="vehicle", loss_db=0.0)
    config = SceneConfig().model_copy(update={"max_paths": 2})
    scene = make_scene(
        buildings=(wall,), dynamics=(car,), tx=(0.0, 10.0, 2.7), config=config
    )
    free, _, dynamic = candidate_paths(scene, pose(20.0, 10.0))
    specular = next(p for p in free if p.kind == "specular")
    (scatter,) = dynamic
    assert scatter.power > specular.power
    assert [p.kind for p in trace_paths(scene, pose(20.0, 10.0))] == [
        "los",
        "specular",
    ]


CLEARANCE_M = 0.02


def sampled_hits(
    p: tuple[float, float], q: tuple[float, float], box: Building, margin: float
) -> bool:
    """Whether points spaced <= 1 cm along pq fall in ``box`` grown by margin."""
    n = math.ceil(math.dist(p, q) / 0.01) + 1
    t = np.linspace(0.0, 1.0, n)
    x = p[0] + t * (q[0] - p[0])
    y = p[1] + t * (q[1] - p[1])
    inside = (
        (x >= box.x0 - margin)
        & (x <= box.x1 + margin)
        & (y >= box.y0 - margin)
        & (y <= box.y1 + margin)
    )
    return bool(inside.any())


coords = st.floats(0.0, 200.0)
buildings = st.builds(
    lambda x, y, w, d: Building(x, y, x + w, y + d, height_m=20.0, loss_db=3.0),
    coords,
    coords,
    st.floats(2.0, 60.0),
    st.floats(2.0, 60.0),
)
# offset so endpoints never share a coordinate with a wall
ends = coords.map(lambda v: v + 0.5)


@settings(deadline=None)
@given(st.lists(buildings, max_size=4), ends, ends, ends, ends)
def test_los_matches_a_sampled_segment_test(
    blocks: list[Building], tx_x: float, tx_y: float, rx_x: float, rx_y: float
) -> None:
    tx, rx = (tx_x, tx_y), (rx_x, rx_y)
    assume(math.dist(tx, rx) > 1.0)
    blocked = False
    for box in blocks:
        inner = sampled_hits(rx, tx, box, -CLEARANCE_M)
        outer = sampled_hits(rx, tx, box, CLEARANCE_M)
        # grazing contacts are left to the exact clipper
        assume(inner == outer)
        blocked = blocked or inner
    scene = make_scene(buildings=tuple(blocks), tx=(tx_x, tx_y, 20.0))
    kinds = [p.kind for p in trace_paths(scene, pose(rx_x, rx_y))]
    assert ("los" in kinds) == (not blocked)
    assert has_los(scene, rx_x, rx_y) == (not blocked)
