"""Geodetic helpers: local tangent plane to lat/lon and haversine distance."""

from __future__ import annotations

import math

import numpy as np
from numpy.typing import ArrayLike
from numpy.typing import NDArray

from v2i_chanpred.channel_stats import wrap_deg

# Earth's mean radius in meters
EARTH_RADIUS_M = 6_371_000.0


def to_geodetic(
    origin: tuple[float, float], xy: tuple[float, float]
) -> tuple[float, float]:
    """Map a local east/north offset in meters to (lat, lon) degrees.

    Local-tangent-plane inverse around ``origin``; accurate for offsets that are
    small relative to the Earth radius.
    """
    lat0, lon0 = origin
    x, y = xy
    lat = lat0 + math.degrees(y / EARTH_RADIUS_M)
    lon = lon0 + math.degrees(x / (EARTH_RADIUS_M * math.cos(math.radians(lat0))))
    return lat, lon


def haversine_m(
    lat1: ArrayLike, lon1: ArrayLike, lat2: ArrayLike, lon2: ArrayLike
) -> NDArray[np.float64]:
    """Great-circle distance in meters (vectorised over numpy inputs)."""
    lat1, lon1, lat2, lon2 = (
        np.radians(np.asarray(v, dtype=np.float64)) for v in (lat1, lon1, lat2, lon2)
    )
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    a = np.sin(dlat / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2) ** 2
    c = 2 * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))
    return EARTH_RADIUS_M * c


def bearing_deg(dx: float, dy: float) -> float:
    """Compass bearing (clockwise from north) of an east/north displacement."""
    return wrap_deg(math.degrees(math.atan2(dx, dy)))
