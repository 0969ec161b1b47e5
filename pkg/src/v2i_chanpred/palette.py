"""palette.py

Fixed colours for semantic classes and plot series.
Every class id the renderer can emit has exactly one RGB colour, so the
colour encoding of a class map is deterministic and reversible.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np

from v2i_chanpred.errors import UnknownClassError

if TYPE_CHECKING:
    from numpy.typing import NDArray

# ----------------------------------------------------------------------
# Semantic classes
# ----------------------------------------------------------------------
VOID = 0
SKY = 1
ROAD = 2
BUILDING = 3
VEHICLE = 4
PEDESTRIAN = 5

CLASS_NAMES: dict[int, str] = {
    VOID: "void",
    SKY: "sky",
    ROAD: "road",
    BUILDING: "building",
    VEHICLE: "vehicle",
    PEDESTRIAN: "pedestrian",
}

# Classes removed by dynamic-scatterer masking
MASKED_CLASSES: frozenset[int] = frozenset({SKY, ROAD, VEHICLE, PEDESTRIAN})

CLASS_COLORS: dict[int, tuple[int, int, int]] = {
    VOID: (0, 0, 0),
    SKY: (0, 200, 255),
    ROAD: (128, 64, 128),
    BUILDING: (128, 128, 128),
    VEHICLE: (0, 0, 230),
    PEDESTRIAN: (220, 20, 60),
}

# ----------------------------------------------------------------------
# Plot series
# ----------------------------------------------------------------------
SERIES_STYLES: dict[str, dict[str, str | int]] = {
    "target": {"symbol": "circle", "base_color": "#444444", "dash": "solid"},
    "prediction": {"symbol": "square", "base_color": "#0060ff", "dash": "dash"},
    "raw": {"symbol": "triangle-up", "base_color": "#ff0000", "dash": "solid"},
    "masked": {"symbol": "triangle-down", "base_color": "#00c83e", "dash": "solid"},
    "train": {"symbol": "circle", "base_color": "#444444", "dash": "solid"},
    "val": {"symbol": "diamond", "base_color": "#ffd000", "dash": "dot"},
}


def _rgb_hex(r: float, g: float, b: float) -> str:
    """Convert 0-1 floats to #RRGGBB."""
    return f"#{round(r * 255):02x}{round(g * 255):02x}{round(b * 255):02x}"


def class_hex(class_id: int) -> str:
    r, g, b = CLASS_COLORS[class_id]
    return _rgb_hex(r / 255, g / 255, b / 255)


def series_color(name: str) -> str:
    return str(SERIES_STYLES.get(name, SERIES_STYLES["target"])["base_color"])


def palette_table(
    palette: dict[int, tuple[int, int, int]] | None = None,
) -> NDArray[np.float32]:
    """Return a ``(num_classes, 3)`` lookup table scaled to [0, 1]."""
    palette = palette or CLASS_COLORS
    table = np.zeros((max(palette) + 1, 3), dtype=np.float32)
    for cid, rgb in palette.items():
        table[cid] = np.asarray(rgb, dtype=np.float32) / 255.0
    return table


def check_classes(
    class_map: NDArray[np.integer], palette: dict[int, tuple[int, int, int]]
) -> None:
    """Raise :class:`UnknownClassError` for ids the palette does not cover."""
    unknown = sorted(set(np.unique(class_map).tolist()) - set(palette))
    if unknown:
        msg = f"class ids {unknown} are not in the palette"
        raise UnknownClassError(msg)


def palette_to_json(
    palette: dict[int, tuple[int, int, int]] | None = None,
) -> dict[str, list[int]]:
    return {str(k): list(v) for k, v in (palette or CLASS_COLORS).items()}


def palette_from_json(raw: dict[str, list[int]]) -> dict[int, tuple[int, int, int]]:
    return {int(k): (int(v[0]), int(v[1]), int(v[2])) for k, v in raw.items()}
