"""Timestamp alignment of the channel, image and GPS streams."""

from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from collections.abc import Sequence

logger = logging.getLogger(__name__)

DEFAULT_MAX_OFFSET_S = 0.1


@dataclass(frozen=True, slots=True)
class TimedRecord:
    timestamp_s: float
    key: str


@dataclass(frozen=True, slots=True)
class Triplet:
    channel: TimedRecord
    image: TimedRecord
    gps: TimedRecord

    @property
    def offsets(self) -> tuple[float, float]:
        t = self.channel.timestamp_s
        return abs(self.image.timestamp_s - t), abs(self.gps.timestamp_s - t)


def _nearest_unused(times: list[float], used: list[bool], t: float) -> int | None:
    """Index of the unused record closest to ``t``; ties go to the earlier one."""
    right = bisect.bisect_left(times, t)
    left = right - 1
    while left >= 0 and used[left]:
        left -= 1
    while right < len(times) and used[right]:
        right += 1
    if left < 0 and right >= len(times):
        return None
    if left < 0:
        return right
    if right >= len(times):
        return left
    return left if t - times[left] <= times[right] - t else right


def synchronize(
    channel: Sequence[TimedRecord],
    image: Sequence[TimedRecord],
    gps: Sequence[TimedRecord],
    max_offset_s: float = DEFAULT_MAX_OFFSET_S,
) -> list[Triplet]:
    """Match each channel record to its nearest image and GPS records.

    Channel records are visited in time order. A triplet is kept only when both
    offsets are within ``max_offset_s``; only kept triplets consume their image
    and GPS records, so every record is used at most once.
    """
    img_times = [r.timestamp_s for r in image]
    gps_times = [r.timestamp_s for r in gps]
    img_used = [False] * len(image)
    gps_used = [False] * len(gps)
    out: list[Triplet] = []
    for rec in channel:
        i = _nearest_unused(img_times, img_used, rec.timestamp_s)
        g = _nearest_unused(gps_times, gps_used, rec.timestamp_s)
        if i is None or g is None:
            continue
        if (
            abs(img_times[i] - rec.timestamp_s) > max_offset_s
            or abs(gps_times[g] - rec.timestamp_s) > max_offset_s
        ):
            continue
        img_used[i] = True
        gps_used[g] = True
        out.append(Triplet(rec, image[i], gps[g]))
    logger.debug("synchronized %d of %d channel records", len(out), len(channel))
    return out
