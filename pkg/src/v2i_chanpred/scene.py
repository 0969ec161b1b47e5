"""Procedural street-canyon scenes and receiver trajectories.

A scene is a straight road along x with buildings on both sides, a fixed
transmitter and a handful of point-like dynamic scatterers (vehicles on the
far lane, pedestrians on the sidewalks). The receiver drives east along the
near lane.

Every random draw comes from a named, counter-based stream (:func:`rng_stream`),
so generating one part of a dataset never shifts the draws of another.
"""

from __future__ import annotations

import json
import logging
import math
import zlib
from dataclasses import asdict
from dataclasses import dataclass
from dataclasses import replace
from typing import TYPE_CHECKING
from typing import Literal

import numpy as np

from v2i_chanpred.errors import SceneGenerationError
from v2i_chanpred.errors import TrajectoryError

if TYPE_CHECKING:
    from pathlib import Path

    from numpy.typing import NDArray

    from v2i_chanpred.config import SceneConfig

logger = logging.getLogger(__name__)

DynamicKind = Literal["vehicle", "pedestrian"]

VEHICLE_RADIUS_M = 2.0
VEHICLE_HEIGHT_M = 1.6
PEDESTRIAN_RADIUS_M = 0.4
PEDESTRIAN_HEIGHT_M = 1.75
# first building is centred within this distance of the transmitter's x
SHADOW_SPAN_M = 50.0
TRAJECTORY_SCAN_STEP_M = 5.0


def rng_stream(seed: int, label: str, index: int = 0) -> np.random.Generator:
    """Return the counter-based generator for ``(seed, label, index)``.

    Streams with different labels or indices are statistically independent and
    do not depend on how many draws other streams made.
    """
    key = (zlib.crc32(label.encode("utf-8")), index)
    seq = np.random.SeedSequence(seed, spawn_key=key)
    return np.random.Generator(np.random.Philox(seq))


# ─── Geometry ────────────────────────────────────────────────────────────────


@dataclass(frozen=True, slots=True)
class Building:
    """Axis-aligned building footprint ``[x0, x1] x [y0, y1]``."""

    x0: float
    y0: float
    x1: float
    y1: float
    height_m: float
    loss_db: float

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    def overlaps(self, other: Building) -> bool:
        return not (
            self.x1 <= other.x0
            or other.x1 <= self.x0
            or self.y1 <= other.y0
            or other.y1 <= self.y0
        )

    def facades(self) -> tuple[tuple[str, float], ...]:
        """Return the four walls as (axis, coordinate) mirror lines."""
        return (("x", self.x0), ("x", self.x1), ("y", self.y0), ("y", self.y1))


@dataclass(frozen=True, slots=True)
class Dynamic:
    """A vehicle or pedestrian, modelled as a vertical cylinder."""

    x: float
    y: float
    radius_m: float
    height_m: float
    kind: DynamicKind
    loss_db: float


@dataclass(frozen=True, slots=True)
class Transmitter:
    x: float
    y: float
    height_m: float


@dataclass(frozen=True, slots=True)
class RxPose:
    """Receiver position, heading (compass degrees) and pose time."""

    x: float
    y: float
    heading_deg: float
    height_m: float
    timestamp_s: float
    index: int = 0


@dataclass(frozen=True)
class Scene:
    area_id: int
    seed: int
    extent_m: tuple[float, float]
    road: tuple[tuple[float, float], ...]
    buildings: tuple[Building, ...]
    dynamics: tuple[Dynamic, ...]
    tx: Transmitter
    origin: tuple[float, float]
    config: SceneConfig

    def without_dynamics(self) -> Scene:
        return replace(self, dynamics=())

    def to_dict(self) -> dict[str, object]:
        """Human-readable geometry dump."""
        return {
            "area_id": self.area_id,
            "seed": self.seed,
            "extent_m": list(self.extent_m),
            "road": [list(v) for v in self.road],
            "buildings": [asdict(b) for b in self.buildings],
            "dynamics": [asdict(d) for d in self.dynamics],
            "tx": asdict(self.tx),
            "origin": list(self.origin),
        }

    def dump(self, path: Path) -> None:
        path.write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")


def segment_hits_box(
    p: tuple[float, float], q: tuple[float, float], box: Building
) -> bool:
    """Return True when the closed segment ``pq`` touches the footprint."""
    # Liang-Barsky clipping against the closed rectangle
    dx = q[0] - p[0]
    dy = q[1] - p[1]
    t0, t1 = 0.0, 1.0
    for denom, num in (
        (-dx, p[0] - box.x0),
        (dx, box.x1 - p[0]),
        (-dy, p[1] - box.y0),
        (dy, box.y1 - p[1]),
    ):
        if denom == 0:
            if num < 0:
                return False
            continue
        t = num / denom
        if denom < 0:
            t0 = max(t0, t)
        else:
            t1 = min(t1, t)
        if t0 > t1:
            return False
    return True


def blocking_buildings(
    p: tuple[float, float],
    q: tuple[float, float],
    buildings: tuple[Building, ...],
    skip: Building | None = None,
) -> int:
    """Count the footprints the segment ``pq`` crosses."""
    return sum(1 for b in buildings if b is not skip and segment_hits_box(p, q, b))


def has_los(scene: Scene, x: float, y: float) -> bool:
    return blocking_buildings((x, y), (scene.tx.x, scene.tx.y), scene.buildings) == 0


# ─── Generation ──────────────────────────────────────────────────────────────


def _place_building(
    config: SceneConfig,
    rng: np.random.Generator,
    placed: list[Building],
    *,
    side: int,
    x_window: tuple[float, float] | None,
) -> Building | None:
    width, length = config.extent_m
    road_lo, road_hi = config.road_bounds_y
    north_edge = road_hi + config.sidewalk_m
    south_edge = road_lo - config.sidewalk_m
    tx, ty = config.tx_xy_m
    for _ in range(config.placement_retries):
        w = min(float(rng.uniform(*config.building_width_m)), width)
        depth = float(rng.uniform(*config.building_depth_m))
        lo, hi = 0.0, width - w
        if x_window is not None:
            lo = max(lo, x_window[0] - w / 2)
            hi = min(hi, x_window[1] - w / 2)
            if lo > hi:
                lo, hi = 0.0, width - w
        x0 = float(rng.uniform(lo, hi))
        if side > 0:
            y0, y1 = north_edge, min(north_edge + depth, length)
        else:
            y0, y1 = max(south_edge - depth, 0.0), south_edge
        if y1 <= y0:
            return None
        height = float(rng.uniform(*config.building_height_m))
        loss = float(rng.uniform(*config.facade_loss_db))
        candidate = Building(x0, y0, x0 + w, y1, height, loss)
        if candidate.contains(tx, ty):
            continue
        if any(candidate.overlaps(b) for b in placed):
            continue
        return candidate
    return None


def _place_dynamics(config: SceneConfig) -> tuple[Dynamic, ...]:
    rng = rng_stream(config.seed, f"dynamics/{config.area_id}")
    width, _ = config.extent_m
    road_lo, road_hi = config.road_bounds_y
    far_lane_y = config.road_center_y + config.road_width_m / 4
    n_veh = int(rng.integers(*config.vehicle_count, endpoint=True))
    n_ped = int(rng.integers(*config.pedestrian_count, endpoint=True))
    placed: list[Dynamic] = []
    plan: tuple[tuple[DynamicKind, int], ...] = (
        ("vehicle", n_veh),
        ("pedestrian", n_ped),
    )
    for kind, count in plan:
        for i in range(count):
            for _ in range(config.placement_retries):
                if kind == "vehicle":
                    radius, height = VEHICLE_RADIUS_M, VEHICLE_HEIGHT_M
                    y = far_lane_y
                    loss = float(rng.uniform(*config.vehicle_loss_db))
                else:
                    radius, height = PEDESTRIAN_RADIUS_M, PEDESTRIAN_HEIGHT_M
                    band = max(config.sidewalk_m - 2 * radius, 0.0)
                    offset = radius + float(rng.uniform(0.0, band))
                    north = rng.random() < 0.5  # noqa: PLR2004
                    y = road_hi + offset if north else road_lo - offset
                    loss = float(rng.uniform(*config.pedestrian_loss_db))
                x = float(rng.uniform(radius, width - radius))
                if all(
                    math.hypot(x - d.x, y - d.y) > radius + d.radius_m for d in placed
                ):
                    placed.append(Dynamic(x, y, radius, height, kind, loss))
                    break
            else:
                msg = (
                    f"cannot place {kind} {i + 1}/{count} without overlap "
                    f"after {config.placement_retries} retries"
                )
                raise SceneGenerationError(msg)
    return tuple(placed)


def generate_scene(config: SceneConfig) -> Scene:
    """Build the scene described by ``config``; the seed fixes every draw.

    The first building is placed on the transmitter's side of the road and near
    its x so that part of the road is shadowed.

    Raises
    ------
    SceneGenerationError
        If a building or dynamic object cannot be placed without overlap.
    """
    width, _ = config.extent_m
    road_lo, road_hi = config.road_bounds_y
    tx_x, tx_y = config.tx_xy_m
    if road_lo <= tx_y <= road_hi:
        msg = f"tx at y={tx_y} stands on the road"
        raise SceneGenerationError(msg)
    tx_side = 1 if tx_y > config.road_center_y else -1

    rng = rng_stream(config.seed, f"buildings/{config.area_id}")
    count = int(rng.integers(*config.building_count, endpoint=True))
    buildings: list[Building] = []
    for i in range(count):
        first = i == 0
        side = tx_side if first else (1 if rng.random() < 0.5 else -1)  # noqa: PLR2004
        window = (tx_x - SHADOW_SPAN_M, tx_x + SHADOW_SPAN_M) if first else None
        building = _place_building(config, rng, buildings, side=side, x_window=window)
        if building is None:
            msg = (
                f"cannot place building {i + 1}/{count} without overlapping "
                f"another building or the transmitter after "
                f"{config.placement_retries} retries"
            )
            raise SceneGenerationError(msg)
        buildings.append(building)

    scene = Scene(
        area_id=config.area_id,
        seed=config.seed,
        extent_m=config.extent_m,
        road=((0.0, road_lo), (width, road_lo), (width, road_hi), (0.0, road_hi)),
        buildings=tuple(buildings),
        dynamics=_place_dynamics(config),
        tx=Transmitter(tx_x, tx_y, config.tx_height_m),
        origin=config.origin_latlon,
        config=config,
    )
    logger.debug(
        "area %d: %d buildings, %d dynamics",
        config.area_id,
        len(scene.buildings),
        len(scene.dynamics),
    )
    return scene


# ─── Trajectory ──────────────────────────────────────────────────────────────


def _poses_from(
    start_x: float, offsets: NDArray[np.float64], config: SceneConfig
) -> list[RxPose]:
    y = config.rx_lane_y
    return [
        RxPose(
            x=start_x + float(off),
            y=y,
            heading_deg=90.0,
            height_m=config.rx_height_m,
            timestamp_s=i * config.snapshot_interval_s,
            index=i,
        )
        for i, off in enumerate(offsets)
    ]


def _mixed(scene: Scene, poses: list[RxPose]) -> bool:
    flags = {has_los(scene, p.x, p.y) for p in poses}
    return len(flags) == 2  # noqa: PLR2004


def sample_trajectory(
    scene: Scene, n: int, config: SceneConfig | None = None
) -> list[RxPose]:
    """Lay ``n`` receiver poses eastward along the near lane.

    Poses are ``snapshot_interval_s`` apart; each step is driven at a speed
    drawn between ``min_speed_fraction`` and 1 times the speed cap. When the
    scene has buildings and ``n >= 20`` the start point is chosen so that both
    LoS and NLoS poses occur, if any start on the road allows it.

    Raises
    ------
    TrajectoryError
        If ``n < 1`` or the road is too short for the drawn route.
    """
    config = config or scene.config
    if n < 1:
        msg = f"need at least one pose, got n={n}"
        raise TrajectoryError(msg)
    rng = rng_stream(config.seed, f"trajectory/{config.area_id}")
    cap = config.max_speed_mps
    speeds = rng.uniform(config.min_speed_fraction, 1.0, size=n - 1) * cap
    offsets = np.concatenate([[0.0], np.cumsum(speeds * config.snapshot_interval_s)])
    route = float(offsets[-1])
    width = scene.extent_m[0]
    if route > width:
        msg = f"road of {width:.0f} m is too short for {n} poses ({route:.1f} m)"
        raise TrajectoryError(msg)
    start = float(rng.uniform(0.0, width - route))
    poses = _poses_from(start, offsets, config)
    if not scene.buildings or n < 20 or _mixed(scene, poses):  # noqa: PLR2004
        return poses

    # scan outward from the drawn start for a route that mixes LoS and NLoS
    grid = np.arange(0.0, width - route + 1e-9, TRAJECTORY_SCAN_STEP_M)
    for cand in sorted(grid, key=lambda s: (abs(s - start), s)):
        trial = _poses_from(float(cand), offsets, config)
        if _mixed(scene, trial):
            return trial
    logger.warning(
        "area %d: no start gives both LoS and NLoS poses; keeping x=%.1f",
        scene.area_id,
        start,
    )
    return poses
