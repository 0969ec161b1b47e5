"""End-to-end dataset generation: simulate, synchronize, filter, encode, write.

``generate_dataset`` writes, under the output root::

    raw/              dataset with every class visible
    masked/           same snapshot ids with sky, road and dynamics masked
    scene_<area>.json geometry dump of each area
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd
from tqdm import tqdm

from v2i_chanpred.channel_stats import labels_from_mpcs
from v2i_chanpred.channel_stats import total_power
from v2i_chanpred.channel_stats import write_mpc_jsonl
from v2i_chanpred.config import DatasetConfig
from v2i_chanpred.config import SceneConfig
from v2i_chanpred.dataset_io import DatasetWriter
from v2i_chanpred.dataset_io import Sample
from v2i_chanpred.encoding import encode_inputs
from v2i_chanpred.encoding import mask_dynamic
from v2i_chanpred.filtering import filter_invalid
from v2i_chanpred.scene import generate_scene
from v2i_chanpred.scene import sample_trajectory
from v2i_chanpred.snapshots import RawSnapshot
from v2i_chanpred.snapshots import make_snapshot
from v2i_chanpred.sync import TimedRecord
from v2i_chanpred.sync import synchronize

if TYPE_CHECKING:
    from v2i_chanpred.channel_stats import MpcSet
    from v2i_chanpred.dataset_io import DatasetManifest
    from v2i_chanpred.sync import Triplet

logger = logging.getLogger(__name__)

VARIANTS = ("raw", "masked")


def area_seed(base_seed: int, area_id: int) -> int:
    """Derive the 64-bit seed of one area from the dataset seed."""
    seq = np.random.SeedSequence(base_seed, spawn_key=(area_id,))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def area_scene_config(config: DatasetConfig, area_id: int) -> SceneConfig:
    base = config.scene
    width = base.extent_m[0]
    return SceneConfig.model_validate(
        {
            **base.model_dump(),
            "seed": area_seed(config.seed, area_id),
            "area_id": area_id,
            "tx_height_m": config.tx_heights_m[area_id - 1],
            "tx_xy_m": (config.tx_x_fractions[area_id - 1] * width, base.tx_xy_m[1]),
        }
    )


def simulate_area(
    config: DatasetConfig, area_id: int, out_dir: Path | None = None
) -> list[RawSnapshot]:
    scene_cfg = area_scene_config(config, area_id)
    scene = generate_scene(scene_cfg)
    if out_dir is not None:
        scene.dump(out_dir / f"scene_{area_id}.json")
    poses = sample_trajectory(scene, config.snapshots_per_area)
    return [
        make_snapshot(scene, pose)
        for pose in tqdm(poses, desc=f"area {area_id}", leave=False)
    ]


def _streams(
    snapshots: list[RawSnapshot],
) -> tuple[list[TimedRecord], list[TimedRecord], list[TimedRecord]]:
    def stream(attr: str) -> list[TimedRecord]:
        recs = [TimedRecord(getattr(s, attr), s.snapshot_id) for s in snapshots]
        return sorted(recs, key=lambda r: (r.timestamp_s, r.key))

    return stream("channel_s"), stream("image_s"), stream("gps_s")


def snapshot_frame(
    triplets: list[Triplet], by_id: dict[str, RawSnapshot]
) -> pd.DataFrame:
    """Build the filter table of synchronized triplets."""
    rows = []
    for trip in triplets:
        chan = by_id[trip.channel.key]
        gps = by_id[trip.gps.key]
        rows.append(
            {
                "snapshot_id": chan.snapshot_id,
                "timestamp_s": trip.channel.timestamp_s,
                "rx_lat": gps.rx_geo[0],
                "rx_lon": gps.rx_geo[1],
                "total_power": total_power(chan.mpcs),
                "image_key": trip.image.key,
                "gps_key": trip.gps.key,
            }
        )
    return pd.DataFrame(
        rows,
        columns=[
            "snapshot_id",
            "timestamp_s",
            "rx_lat",
            "rx_lon",
            "total_power",
            "image_key",
            "gps_key",
        ],
    )


def _sample(
    row: pd.Series, by_id: dict[str, RawSnapshot], *, masked: bool, size: int
) -> Sample:
    chan = by_id[str(row["snapshot_id"])]
    image = by_id[str(row["image_key"])]
    gps = by_id[str(row["gps_key"])]
    panorama = mask_dynamic(image.panorama) if masked else image.panorama
    semantic_in, depth_in = encode_inputs(panorama, size=size)
    return Sample(
        snapshot_id=chan.snapshot_id,
        area_id=chan.area_id,
        semantic_in=semantic_in,
        depth_in=depth_in,
        tx_geo=chan.tx_geo,
        rx_geo=gps.rx_geo,
        labels=labels_from_mpcs(chan.mpcs),
        timestamp_s=float(row["timestamp_s"]),
    )


def generate_dataset(
    config: DatasetConfig, out_root: Path
) -> dict[str, DatasetManifest]:
    """Simulate every area and write the raw and masked dataset variants."""
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    seeds = [area_seed(config.seed, a) for a in range(1, config.areas + 1)]
    writers = {
        v: DatasetWriter(out_root / v, masked=v == "masked", seeds=seeds)
        for v in VARIANTS
    }
    drop_frames: list[pd.DataFrame] = []
    kept_mpcs: list[MpcSet] = []

    for area_id in tqdm(range(1, config.areas + 1), desc="areas"):
        snapshots = simulate_area(config, area_id, out_root)
        by_id = {s.snapshot_id: s for s in snapshots}
        triplets = synchronize(*_streams(snapshots), max_offset_s=config.max_offset_s)
        matched = {t.channel.key for t in triplets}
        unsynced = [s.snapshot_id for s in snapshots if s.snapshot_id not in matched]
        for sid in unsynced:
            logger.info("dropped %s (sync)", sid)
        drop_frames.append(pd.DataFrame({"snapshot_id": unsynced, "rule": "sync"}))

        kept, drops = filter_invalid(snapshot_frame(triplets, by_id), config.filters)
        drop_frames.append(drops)
        for _, row in kept.iterrows():
            for variant, writer in writers.items():
                writer.add(
                    _sample(
                        row,
                        by_id,
                        masked=variant == "masked",
                        size=config.image_size,
                    )
                )
            kept_mpcs.append(by_id[str(row["snapshot_id"])].mpcs)

    drop_log = pd.concat(drop_frames, ignore_index=True)
    manifests: dict[str, DatasetManifest] = {}
    for variant, writer in writers.items():
        writer.write_drops(drop_log)
        write_mpc_jsonl(writer.directory / "mpcs.jsonl", kept_mpcs)
        manifests[variant] = writer.close()
    logger.info(
        "generated %d samples over %d areas (%d dropped)",
        manifests["raw"].sample_count,
        config.areas,
        len(drop_log),
    )
    return manifests
