"""Bundling of one receiver pose into a raw multimodal snapshot."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

from v2i_chanpred.geo import to_geodetic
from v2i_chanpred.rendering import render_panorama
from v2i_chanpred.scene import rng_stream
from v2i_chanpred.tracing import trace_mpcs

if TYPE_CHECKING:
    from v2i_chanpred.channel_stats import MpcSet
    from v2i_chanpred.config import SceneConfig
    from v2i_chanpred.rendering import Panorama
    from v2i_chanpred.scene import RxPose
    from v2i_chanpred.scene import Scene


@dataclass(frozen=True)
class RawSnapshot:
    snapshot_id: str
    area_id: int
    panorama: Panorama
    tx_geo: tuple[float, float]
    rx_geo: tuple[float, float]
    mpcs: MpcSet
    channel_s: float
    image_s: float
    gps_s: float
    pose: RxPose

    @property
    def timestamps(self) -> tuple[float, float, float]:
        return self.channel_s, self.image_s, self.gps_s


def snapshot_id(area_id: int, index: int) -> str:
    return f"a{area_id}-{index:05d}"


def make_snapshot(
    scene: Scene, pose: RxPose, config: SceneConfig | None = None
) -> RawSnapshot:
    """Render, trace and timestamp one pose.

    Each modality's timestamp is the pose time plus an independent offset drawn
    uniformly from ``[-jitter_s, jitter_s]`` by the stream of this pose index.
    """
    config = config or scene.config
    sid = snapshot_id(scene.area_id, pose.index)
    rng = rng_stream(config.seed, f"jitter/{scene.area_id}", pose.index)
    jitter = rng.uniform(-config.jitter_s, config.jitter_s, size=3)
    channel_s, image_s, gps_s = (pose.timestamp_s + float(j) for j in jitter)
    return RawSnapshot(
        snapshot_id=sid,
        area_id=scene.area_id,
        panorama=render_panorama(scene, pose),
        tx_geo=to_geodetic(scene.origin, (scene.tx.x, scene.tx.y)),
        rx_geo=to_geodetic(scene.origin, (pose.x, pose.y)),
        mpcs=trace_mpcs(scene, pose, config, snapshot_id=sid),
        channel_s=channel_s,
        image_s=image_s,
        gps_s=gps_s,
        pose=pose,
    )
