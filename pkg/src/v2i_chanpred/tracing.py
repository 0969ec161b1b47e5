"""Single-bounce geometric channel model.

Candidate paths are the direct path, one specular reflection per building
facade (image method) and one point scatter per dynamic object. A path is
kept only when each of its legs is free of building footprints; if no static
path is free, the least attenuated blocked static path is kept with a
penetration loss per crossed building.

Static and dynamic paths are selected separately: the dynamic-range
reference is the strongest static path and dynamic paths only fill the slots
left under ``max_paths``. Adding or removing dynamics therefore never changes
the static part of the result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING
from typing import Literal

from v2i_chanpred.channel_stats import Mpc
from v2i_chanpred.channel_stats import MpcSet
from v2i_chanpred.channel_stats import wrap_deg
from v2i_chanpred.channel_stats import wrap_rad
from v2i_chanpred.geo import bearing_deg
from v2i_chanpred.scene import blocking_buildings

if TYPE_CHECKING:
    from v2i_chanpred.config import SceneConfig
    from v2i_chanpred.scene import Building
    from v2i_chanpred.scene import RxPose
    from v2i_chanpred.scene import Scene

SPEED_OF_LIGHT = 299_792_458.0
# scatter point height as a fraction of the object height
SCATTER_HEIGHT_FRACTION = 0.5

PathKind = Literal["los", "specular", "scatter", "penetration"]

Point = tuple[float, float]


@dataclass(frozen=True, slots=True)
class TracedPath:
    """One propagation path before conversion to an :class:`Mpc`."""

    kind: PathKind
    length_m: float
    amplitude: float
    aod_bearing_deg: float
    aoa_bearing_deg: float
    extra_phase: float = 0.0
    source: int = -1

    @property
    def power(self) -> float:
        return self.amplitude * self.amplitude


def wavelength_m(carrier_hz: float) -> float:
    return SPEED_OF_LIGHT / carrier_hz


def _friis(wavelength: float, length: float, loss_db: float = 0.0) -> float:
    return wavelength / (4.0 * math.pi * length) * 10.0 ** (-loss_db / 20.0)


def _dist3(p: Point, hp: float, q: Point, hq: float) -> float:
    return math.sqrt((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 + (hp - hq) ** 2)


def _reflection_point(
    tx: Point, rx: Point, building: Building, axis: str, coord: float
) -> Point | None:
    """Return the specular point on one facade, or None when it does not exist.

    Both ends must lie strictly on the exterior side of the facade and the
    mirror point must fall on the wall segment.
    """
    i, j = (0, 1) if axis == "x" else (1, 0)
    outward = -1.0 if coord == (building.x0 if axis == "x" else building.y0) else 1.0
    if (tx[i] - coord) * outward <= 0 or (rx[i] - coord) * outward <= 0:
        return None
    image = list(tx)
    image[i] = 2.0 * coord - tx[i]
    # intersection of rx -> image with the mirror line
    t = (coord - rx[i]) / (image[i] - rx[i])
    along = rx[j] + t * (image[j] - rx[j])
    lo, hi = (building.y0, building.y1) if axis == "x" else (building.x0, building.x1)
    if not lo <= along <= hi:
        return None
    return (coord, along) if axis == "x" else (along, coord)


def candidate_paths(
    scene: Scene, pose: RxPose, config: SceneConfig | None = None
) -> tuple[list[TracedPath], list[TracedPath], list[TracedPath]]:
    """Return (free static, blocked static, free dynamic) candidates.

    Blocked static candidates already carry their penetration loss.
    """
    config = config or scene.config
    lam = wavelength_m(config.carrier_hz)
    pen = config.penetration_loss_db
    tx: Point = (scene.tx.x, scene.tx.y)
    rx: Point = (pose.x, pose.y)
    h_tx, h_rx = scene.tx.height_m, pose.height_m

    free: list[TracedPath] = []
    blocked: list[TracedPath] = []

    d = _dist3(tx, h_tx, rx, h_rx)
    n_block = blocking_buildings(rx, tx, scene.buildings)
    direct = TracedPath(
        kind="los" if n_block == 0 else "penetration",
        length_m=d,
        amplitude=_friis(lam, d, pen * n_block),
        aod_bearing_deg=bearing_deg(rx[0] - tx[0], rx[1] - tx[1]),
        aoa_bearing_deg=bearing_deg(tx[0] - rx[0], tx[1] - rx[1]),
    )
    (free if n_block == 0 else blocked).append(direct)

    for b_idx, building in enumerate(scene.buildings):
        for axis, coord in building.facades():
            point = _reflection_point(tx, rx, building, axis, coord)
            if point is None:
                continue
            legs = blocking_buildings(
                tx, point, scene.buildings, skip=building
            ) + blocking_buildings(point, rx, scene.buildings, skip=building)
            # image distance in the plane, unfolded with the height difference
            flat = math.dist(tx, point) + math.dist(point, rx)
            length = math.sqrt(flat * flat + (h_tx - h_rx) ** 2)
            path = TracedPath(
                kind="specular" if legs == 0 else "penetration",
                length_m=length,
                amplitude=_friis(lam, length, building.loss_db + pen * legs),
                aod_bearing_deg=bearing_deg(point[0] - tx[0], point[1] - tx[1]),
                aoa_bearing_deg=bearing_deg(point[0] - rx[0], point[1] - rx[1]),
                extra_phase=math.pi,
                source=b_idx,
            )
            (free if legs == 0 else blocked).append(path)

    dynamic: list[TracedPath] = []
    for d_idx, obj in enumerate(scene.dynamics):
        sp: Point = (obj.x, obj.y)
        if blocking_buildings(tx, sp, scene.buildings) or blocking_buildings(
            sp, rx, scene.buildings
        ):
            continue
        h_s = obj.height_m * SCATTER_HEIGHT_FRACTION
        length = _dist3(tx, h_tx, sp, h_s) + _dist3(sp, h_s, rx, h_rx)
        dynamic.append(
            TracedPath(
                kind="scatter",
                length_m=length,
                amplitude=_friis(lam, length, obj.loss_db),
                aod_bearing_deg=bearing_deg(sp[0] - tx[0], sp[1] - tx[1]),
                aoa_bearing_deg=bearing_deg(sp[0] - rx[0], sp[1] - rx[1]),
                source=d_idx,
            )
        )
    return free, blocked, dynamic


def _strongest(paths: list[TracedPath], floor: float, limit: int) -> list[TracedPath]:
    kept = [p for p in paths if p.power >= floor]
    # stable on ties: candidate order decides
    kept.sort(key=lambda p: -p.power)
    return kept[:limit]


def trace_paths(
    scene: Scene, pose: RxPose, config: SceneConfig | None = None
) -> list[TracedPath]:
    """Return the retained paths of one pose, sorted by delay.

    The dynamic-range floor is measured from the strongest static path. Static
    paths fill the ``max_paths`` slots first, strongest first, and dynamic
    scatterers above the floor take the slots that remain, so removing every
    dynamic object never changes the static paths. Without a free static path
    the strongest blocked one is kept alone.
    """
    config = config or scene.config
    free, blocked, dynamic = candidate_paths(scene, pose, config)
    static = free or [max(blocked, key=lambda p: p.power)]
    ref = max(p.power for p in static)
    floor = ref * 10.0 ** (-config.dynamic_range_db / 10.0)
    kept = _strongest(static, floor, config.max_paths)
    kept += _strongest(dynamic, floor, config.max_paths - len(kept))
    kept.sort(key=lambda p: p.length_m)
    return kept


def to_mpc(path: TracedPath, heading_deg: float, wavelength: float) -> Mpc:
    return Mpc(
        amplitude=path.amplitude,
        phase=wrap_rad(-2.0 * math.pi * path.length_m / wavelength + path.extra_phase),
        delay_ns=path.length_m / SPEED_OF_LIGHT * 1e9,
        aod_deg=wrap_deg(path.aod_bearing_deg),
        aoa_deg=wrap_deg(path.aoa_bearing_deg - heading_deg),
    )


def trace_mpcs(
    scene: Scene, pose: RxPose, config: SceneConfig | None = None, snapshot_id: str = ""
) -> MpcSet:
    """Trace the multipath components seen at ``pose``.

    AoD is a world-frame compass bearing at the transmitter; AoA is measured
    in the receiver's vehicle frame so that it lines up with panorama columns.
    """
    config = config or scene.config
    lam = wavelength_m(config.carrier_hz)
    paths = trace_paths(scene, pose, config)
    return MpcSet(tuple(to_mpc(p, pose.heading_deg, lam) for p in paths), snapshot_id)
