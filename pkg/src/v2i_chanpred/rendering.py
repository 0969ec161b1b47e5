"""Semantic and depth panoramas seen from the receiver.

The panorama is the already-cropped band of an equirectangular camera:
360 columns (column ``k`` looks along vehicle-frame azimuth ``k + 0.5``
degrees) and 100 rows from +49.5 down to -49.5 degrees elevation.

Every pixel shows the nearest object whose vertical extent covers its
elevation. Objects stand on the ground, so below the horizon an object wins
over the road exactly when it is closer than the ground point of that row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from v2i_chanpred import palette

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from v2i_chanpred.scene import Building
    from v2i_chanpred.scene import Dynamic
    from v2i_chanpred.scene import RxPose
    from v2i_chanpred.scene import Scene

PANORAMA_WIDTH = 360
PANORAMA_HEIGHT = 100


@dataclass(frozen=True)
class Panorama:
    semantic: NDArray[np.uint8]
    depth: NDArray[np.float32]

    def __post_init__(self) -> None:
        if self.semantic.shape != self.depth.shape:
            msg = f"shape mismatch {self.semantic.shape} vs {self.depth.shape}"
            raise ValueError(msg)
        if self.semantic.shape[1] != PANORAMA_WIDTH:
            msg = f"panorama must have {PANORAMA_WIDTH} columns"
            raise ValueError(msg)


def row_elevations_deg(height: int = PANORAMA_HEIGHT) -> NDArray[np.float64]:
    """Elevation of each row centre, top row first, 1 degree apart."""
    return (height - 1) / 2 - np.arange(height, dtype=np.float64)


def column_bearings_deg(heading_deg: float) -> NDArray[np.float64]:
    """World compass bearing of each column centre."""
    return (heading_deg + np.arange(PANORAMA_WIDTH, dtype=np.float64) + 0.5) % 360.0


def _ray_box(
    ox: float,
    oy: float,
    dx: NDArray[np.float64],
    dy: NDArray[np.float64],
    box: Building,
) -> NDArray[np.float64]:
    """Entry distance of each ray into the footprint (inf when missed)."""
    near = np.full(dx.shape, -np.inf)
    far = np.full(dx.shape, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        for o, d, lo, hi in ((ox, dx, box.x0, box.x1), (oy, dy, box.y0, box.y1)):
            t1 = (lo - o) / d
            t2 = (hi - o) / d
            parallel = d == 0
            inside = lo <= o <= hi
            enter, leave = (-np.inf, np.inf) if inside else (np.inf, -np.inf)
            slab_near = np.where(parallel, enter, np.fmin(t1, t2))
            slab_far = np.where(parallel, leave, np.fmax(t1, t2))
            near = np.maximum(near, slab_near)
            far = np.minimum(far, slab_far)
    hit = (near <= far) & (far >= 0)
    return np.where(hit, np.maximum(near, 0.0), np.inf)


def _ray_disc(
    ox: float,
    oy: float,
    dx: NDArray[np.float64],
    dy: NDArray[np.float64],
    obj: Dynamic,
) -> NDArray[np.float64]:
    fx = ox - obj.x
    fy = oy - obj.y
    b = fx * dx + fy * dy
    c = fx * fx + fy * fy - obj.radius_m * obj.radius_m
    disc = b * b - c
    with np.errstate(invalid="ignore"):
        t = -b - np.sqrt(disc)
    hit = (disc >= 0) & (t >= 0)
    return np.where(hit, t, np.inf)


def render_panorama(scene: Scene, pose: RxPose) -> Panorama:
    """Render the semantic class map and normalised depth seen from ``pose``."""
    d_max = scene.config.d_max_m
    cam_h = pose.height_m
    bearings = np.deg2rad(column_bearings_deg(pose.heading_deg))
    dx = np.sin(bearings)
    dy = np.cos(bearings)
    tan_e = np.tan(np.deg2rad(row_elevations_deg()))[:, None]

    # ground: road below the horizon, sky above
    with np.errstate(divide="ignore"):
        ground = np.where(tan_e < 0, cam_h / -tan_e, np.inf)
    best = np.broadcast_to(ground, (PANORAMA_HEIGHT, PANORAMA_WIDTH)).copy()
    classes = np.where(
        tan_e < 0, np.uint8(palette.ROAD), np.uint8(palette.SKY)
    ) * np.ones((1, PANORAMA_WIDTH), dtype=np.uint8)
    depth = np.where(np.isfinite(best), np.minimum(best / d_max, 1.0), 1.0)

    objects: list[tuple[NDArray[np.float64], float, int]] = [
        (_ray_box(pose.x, pose.y, dx, dy, b), b.height_m, palette.BUILDING)
        for b in scene.buildings
    ]
    objects.extend(
        (
            _ray_disc(pose.x, pose.y, dx, dy, d),
            d.height_m,
            palette.VEHICLE if d.kind == "vehicle" else palette.PEDESTRIAN,
        )
        for d in scene.dynamics
    )
    for dist, height, cls in objects:
        d = dist[None, :]
        finite = np.isfinite(d)
        with np.errstate(invalid="ignore", divide="ignore"):
            top = np.where(finite, (height - cam_h) / d, -np.inf)
        # covered rows: ground at the object's foot up to its top edge
        covered = finite & (tan_e <= top) & (d <= ground) & (d < best)
        best = np.where(covered, d, best)
        classes = np.where(covered, np.uint8(cls), classes)
        depth = np.where(covered, np.minimum(d / d_max, 1.0), depth)

    return Panorama(
        semantic=classes.astype(np.uint8),
        depth=np.clip(depth, 0.0, 1.0).astype(np.float32),
    )


def horizon_row(height: int = PANORAMA_HEIGHT) -> int:
    """Index of the first row below the horizon."""
    return math.ceil(height / 2)
