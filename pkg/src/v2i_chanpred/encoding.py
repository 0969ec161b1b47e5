"""Model-input encoding of panoramas and dynamic-scatterer masking."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np
import torch
import torch.nn.functional as F

from v2i_chanpred import palette as pal
from v2i_chanpred.rendering import Panorama

if TYPE_CHECKING:
    from numpy.typing import NDArray

INPUT_SIZE = 224


def mask_dynamic(panorama: Panorama) -> Panorama:
    """Blank sky, road, vehicles and pedestrians.

    Masked pixels become void (black after colour encoding) and are pushed to
    the farthest depth, 1.0. Building and void pixels are left untouched.
    """
    masked = np.isin(panorama.semantic, list(pal.MASKED_CLASSES))
    semantic = np.where(masked, np.uint8(pal.VOID), panorama.semantic).astype(np.uint8)
    depth = np.where(masked, np.float32(1.0), panorama.depth).astype(np.float32)
    return Panorama(semantic=semantic, depth=depth)


def encode_inputs(
    panorama: Panorama,
    palette: dict[int, tuple[int, int, int]] | None = None,
    size: int = INPUT_SIZE,
) -> tuple[NDArray[np.float32], NDArray[np.float32]]:
    """Return the ``3 x size x size`` semantic and depth inputs in [0, 1].

    The class map is coloured through ``palette`` and resized with nearest
    neighbour sampling, so only palette colours appear. Depth is resized
    bilinearly and replicated to three channels.

    Raises
    ------
    UnknownClassError
        If the class map holds an id the palette does not cover.
    """
    palette = palette or pal.CLASS_COLORS
    pal.check_classes(panorama.semantic, palette)
    table = torch.from_numpy(pal.palette_table(palette))
    ids = torch.from_numpy(panorama.semantic.astype(np.int64))
    rgb = table[ids].permute(2, 0, 1).unsqueeze(0)
    semantic = F.interpolate(rgb, size=(size, size), mode="nearest")[0]

    depth = torch.from_numpy(np.ascontiguousarray(panorama.depth, dtype=np.float32))
    depth = F.interpolate(
        depth[None, None], size=(size, size), mode="bilinear", align_corners=False
    )[0].clamp(0.0, 1.0)
    depth = depth.expand(3, size, size)
    return (
        np.ascontiguousarray(semantic.numpy(), dtype=np.float32),
        np.ascontiguousarray(depth.numpy(), dtype=np.float32),
    )
