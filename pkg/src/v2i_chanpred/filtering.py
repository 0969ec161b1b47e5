"""Validity filter for synchronized snapshots.

The filter works on a snapshot table with the columns

``snapshot_id``, ``timestamp_s``, ``rx_lat``, ``rx_lon``, ``total_power``

ordered by time. Each rule yields a boolean drop mask; masks are combined
with OR and every dropped row is logged once, under the first rule that fired.
"""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd

from v2i_chanpred.geo import haversine_m

if TYPE_CHECKING:
    from collections.abc import Callable
    from collections.abc import Mapping

    from v2i_chanpred.config import FilterRules

logger = logging.getLogger(__name__)

FRAME_COLUMNS = ("snapshot_id", "timestamp_s", "rx_lat", "rx_lon", "total_power")


def _steps(frame: pd.DataFrame) -> tuple[pd.Series, pd.Series]:
    """Distance (m) and time (s) from the previous row; NaN on the first row."""
    lat = frame["rx_lat"].to_numpy(dtype=np.float64)
    lon = frame["rx_lon"].to_numpy(dtype=np.float64)
    dist = np.full(len(frame), np.nan)
    if len(frame) > 1:
        dist[1:] = haversine_m(lat[:-1], lon[:-1], lat[1:], lon[1:])
    dt = frame["timestamp_s"].diff()
    return pd.Series(dist, index=frame.index), dt


def low_power_mask(frame: pd.DataFrame, floor: float) -> pd.Series:
    return frame["total_power"] < floor


def gps_jump_mask(
    frame: pd.DataFrame, max_speed_kmh: float, tolerance_m: float
) -> pd.Series:
    """Flag rows that moved farther than the speed cap allows since the last row."""
    dist, dt = _steps(frame)
    allowed = max_speed_kmh / 3.6 * dt + tolerance_m
    return (dist > allowed).fillna(value=False)


def stop_mask(
    frame: pd.DataFrame, stop_speed_mps: float, max_stop_s: float
) -> pd.Series:
    """Flag rows of a stop once it has lasted longer than ``max_stop_s``.

    A stop starts at the row before the first slow step; the first
    ``max_stop_s`` seconds of it are kept.
    """
    dist, dt = _steps(frame)
    slow = ((dist / dt) < stop_speed_mps).fillna(value=False)
    run = (slow != slow.shift(fill_value=False)).cumsum()
    prev_t = frame["timestamp_s"].shift(1)
    onset = slow & ~slow.shift(fill_value=False)
    start = prev_t.where(onset).groupby(run).transform("first")
    elapsed = frame["timestamp_s"] - start
    return (slow & (elapsed > max_stop_s)).fillna(value=False)


def filter_invalid(
    frame: pd.DataFrame,
    rules: FilterRules,
    extra_rules: Mapping[str, Callable[[pd.DataFrame], pd.Series]] | None = None,
) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Drop invalid snapshots.

    Parameters
    ----------
    frame
        Snapshot table (see module docstring), one row per snapshot.
    rules
        Thresholds; a ``None`` threshold disables its rule.
    extra_rules
        Additional named drop masks, e.g. an image-occlusion detector.

    Returns
    -------
    tuple
        The kept rows and a drop log with columns ``snapshot_id`` and ``rule``.
    """
    frame = frame.sort_values("timestamp_s", kind="stable").reset_index(drop=True)
    masks: dict[str, pd.Series] = {}
    if rules.min_total_power is not None:
        masks["low_power"] = low_power_mask(frame, rules.min_total_power)
    if rules.max_speed_kmh is not None:
        masks["gps_jump"] = gps_jump_mask(
            frame, rules.max_speed_kmh, rules.jump_tolerance_m
        )
    if rules.stop_speed_mps is not None:
        masks["stop"] = stop_mask(frame, rules.stop_speed_mps, rules.max_stop_s)
    for name, rule in (extra_rules or {}).items():
        masks[name] = rule(frame).astype(bool)

    if not masks:
        return frame.copy(), pd.DataFrame({"snapshot_id": [], "rule": []}, dtype=str)

    reason = pd.Series([""] * len(frame), index=frame.index, dtype=object)
    for name, mask in masks.items():
        reason = reason.mask(mask & (reason == ""), name)
    final_mask = reason != ""

    drops = pd.DataFrame(
        {
            "snapshot_id": frame.loc[final_mask, "snapshot_id"],
            "rule": reason[final_mask],
        }
    ).reset_index(drop=True)
    for row in drops.itertuples(index=False):
        logger.info("dropped %s (%s)", row.snapshot_id, row.rule)
    return frame[~final_mask].copy(), drops
