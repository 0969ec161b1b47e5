"""Three-branch channel predictor.

Semantic, depth and location branches each emit a 256-d feature vector. The
active branches are concatenated, scaled by one squeeze-excitation gate per
sample and fed to either the scalar head (PL, DS, ASA, ASD) or the
360-bin APS head.
"""

from __future__ import annotations

import itertools
import logging
import math
from typing import TYPE_CHECKING
from typing import Any

import torch
import torchvision
from torch import nn
from torch.nn import functional as F

from v2i_chanpred.errors import ModalityError
from v2i_chanpred.errors import ShapeMismatchError
from v2i_chanpred.errors import UnknownBackboneError
from v2i_chanpred.geo import EARTH_RADIUS_M

if TYPE_CHECKING:
    from collections.abc import Callable
    from collections.abc import Mapping
    from collections.abc import Sequence

    from v2i_chanpred.config import ModelConfig

logger = logging.getLogger(__name__)

APS_BINS = 360
APS_HIDDEN = 512
SE_REDUCTION = 16
RAW_WEIGHT = 0.2
SMOOTH_WEIGHT = 0.8
SMOOTH_KERNEL = 5
COMPACT_CHANNELS = (3, 16, 32, 64, 128, 256, 512)
DEPTH_CHANNELS = (3, 16, 32, 64, 128)

# modality -> batch keys it needs
MODALITY_INPUTS: dict[str, tuple[str, ...]] = {
    "semantic": ("semantic",),
    "depth": ("depth",),
    "location": ("tx_geo", "rx_geo"),
}


# ─── Backbones ───────────────────────────────────────────────────────────────


class Backbone(nn.Module):
    """Feature extractor ``image -> (B, out_features)`` with frozen early stages.

    Frozen modules get ``requires_grad=False`` and stay in eval mode, so their
    normalization statistics never move.
    """

    def __init__(
        self, body: nn.Module, out_features: int, frozen: Sequence[nn.Module]
    ) -> None:
        super().__init__()
        self.body = body
        self.out_features = out_features
        self._frozen = list(frozen)
        for module in self._frozen:
            for p in module.parameters():
                p.requires_grad_(requires_grad=False)

    def train(self, mode: bool = True) -> Backbone:  # noqa: FBT001, FBT002
        super().train(mode)
        for module in self._frozen:
            module.eval()
        return self

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.flatten(self.body(x), 1)


def _conv_block(c_in: int, c_out: int) -> nn.Sequential:
    conv = nn.Conv2d(c_in, c_out, kernel_size=3, stride=2, padding=1, bias=False)
    nn.init.kaiming_normal_(conv.weight, mode="fan_out", nonlinearity="relu")
    return nn.Sequential(
        conv,
        nn.BatchNorm2d(c_out),
        nn.ReLU(inplace=True),
    )


def _weights(name: str, *, pretrained: bool) -> object | None:
    if not pretrained:
        return None
    return torchvision.models.get_model_weights(name).DEFAULT


def residual34(*, pretrained: bool, freeze: bool) -> Backbone:
    weights = _weights("resnet34", pretrained=pretrained)
    net = torchvision.models.resnet34(weights=weights)
    net.fc = nn.Identity()
    frozen = [net.conv1, net.bn1, net.layer1, net.layer2] if freeze else []
    return Backbone(net, 512, frozen)


def compact_conv(*, pretrained: bool, freeze: bool) -> Backbone:  # noqa: ARG001
    blocks = [
        _conv_block(c_in, c_out)
        for c_in, c_out in itertools.pairwise(COMPACT_CHANNELS)
    ]
    body = nn.Sequential(*blocks, nn.AdaptiveAvgPool2d(1))
    return Backbone(body, COMPACT_CHANNELS[-1], blocks[:2] if freeze else [])


def vgg16(*, pretrained: bool, freeze: bool) -> Backbone:
    net = torchvision.models.vgg16(weights=_weights("vgg16", pretrained=pretrained))
    body = nn.Sequential(net.features, nn.AdaptiveAvgPool2d(1))
    # first two conv stages end at the second max-pool (index 9)
    return Backbone(body, 512, [net.features[:10]] if freeze else [])


def alexnet(*, pretrained: bool, freeze: bool) -> Backbone:
    weights = _weights("alexnet", pretrained=pretrained)
    net = torchvision.models.alexnet(weights=weights)
    body = nn.Sequential(net.features, nn.AdaptiveAvgPool2d(1))
    return Backbone(body, 256, [net.features[:6]] if freeze else [])


def mobilenet_v2(*, pretrained: bool, freeze: bool) -> Backbone:
    net = torchvision.models.mobilenet_v2(
        weights=_weights("mobilenet_v2", pretrained=pretrained)
    )
    body = nn.Sequential(net.features, nn.AdaptiveAvgPool2d(1))
    return Backbone(body, net.last_channel, [net.features[:4]] if freeze else [])


BACKBONES: dict[str, Callable[..., Backbone]] = {
    "residual-34": residual34,
    "compact-conv": compact_conv,
    "vgg16": vgg16,
    "alexnet": alexnet,
    "mobilenet-v2": mobilenet_v2,
}


def build_backbone(
    name: str, *, pretrained: bool = False, freeze: bool = True
) -> Backbone:
    """Instantiate a registered backbone.

    Raises
    ------
    UnknownBackboneError
        If ``name`` is not registered.
    """
    try:
        factory = BACKBONES[name]
    except KeyError as exc:
        msg = f"unknown backbone {name!r}; known: {', '.join(BACKBONES)}"
        raise UnknownBackboneError(msg) from exc
    try:
        return factory(pretrained=pretrained, freeze=freeze)
    except (OSError, RuntimeError) as exc:
        if not pretrained:
            raise
        logger.warning("pretrained %s weights unavailable (%s); random init", name, exc)
        return factory(pretrained=False, freeze=freeze)


# ─── Branches ────────────────────────────────────────────────────────────────


def _check_image(x: torch.Tensor, name: str) -> None:
    if x.ndim != 4 or x.shape[1] != 3:  # noqa: PLR2004
        msg = f"{name} input must be B x 3 x H x W, got {tuple(x.shape)}"
        raise ShapeMismatchError(msg)


class SemanticBranch(nn.Module):
    def __init__(
        self, backbone: Backbone, width: int = 256, dropout: float = 0.3
    ) -> None:
        super().__init__()
        self.backbone = backbone
        self.head = nn.Sequential(
            nn.Linear(backbone.out_features, width), nn.ReLU(), nn.Dropout(dropout)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _check_image(x, "semantic")
        return self.head(self.backbone(x))


class DepthBranch(nn.Module):
    """Four stride-2 conv blocks, global average pooling and a projection."""

    def __init__(self, width: int = 256) -> None:
        super().__init__()
        self.blocks = nn.Sequential(
            *(
                _conv_block(c_in, c_out)
                for c_in, c_out in itertools.pairwise(DEPTH_CHANNELS)
            )
        )
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.fc = nn.Linear(DEPTH_CHANNELS[-1], width)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _check_image(x, "depth")
        return self.fc(torch.flatten(self.pool(self.blocks(x)), 1))


def haversine_torch(tx_geo: torch.Tensor, rx_geo: torch.Tensor) -> torch.Tensor:
    """Great-circle distance in meters between ``(B, 2)`` (lat, lon) tensors."""
    lat1, lon1 = torch.deg2rad(tx_geo[:, 0]), torch.deg2rad(tx_geo[:, 1])
    lat2, lon2 = torch.deg2rad(rx_geo[:, 0]), torch.deg2rad(rx_geo[:, 1])
    a = (
        torch.sin((lat2 - lat1) / 2) ** 2
        + torch.cos(lat1) * torch.cos(lat2) * torch.sin((lon2 - lon1) / 2) ** 2
    )
    return 2 * EARTH_RADIUS_M * torch.asin(torch.sqrt(a.clamp(0.0, 1.0)))


class LocationBranch(nn.Module):
    """Tx-Rx geodesic distance, standardized, through a 1 -> 64 -> 256 perceptron."""

    def __init__(self, mean: float = 0.0, std: float = 1.0, width: int = 256) -> None:
        super().__init__()
        self.register_buffer("mean", torch.tensor(float(mean)))
        self.register_buffer("std", torch.tensor(float(std)))
        self.mlp = nn.Sequential(nn.Linear(1, 64), nn.ReLU(), nn.Linear(64, width))

    def forward(self, tx_geo: torch.Tensor, rx_geo: torch.Tensor) -> torch.Tensor:
        dist = haversine_torch(tx_geo.double(), rx_geo.double())
        z = (dist - self.mean.double()) / self.std.double()
        return self.mlp(z.to(self.mlp[0].weight.dtype).unsqueeze(1))


# ─── Fusion and heads ────────────────────────────────────────────────────────


class SEGatedFusion(nn.Module):
    """Concatenate branch features and scale them by one sigmoid gate per sample."""

    def __init__(self, n_branches: int, width: int = 256) -> None:
        super().__init__()
        fused = n_branches * width
        hidden = math.ceil(fused / SE_REDUCTION)
        self.fc1 = nn.Linear(fused, hidden)
        self.fc2 = nn.Linear(hidden, 1)

    def forward(
        self, features: Sequence[torch.Tensor]
    ) -> tuple[torch.Tensor, torch.Tensor]:
        fused = torch.cat(list(features), dim=1)
        gate = torch.sigmoid(self.fc2(F.relu(self.fc1(fused))))
        return fused * gate, gate.squeeze(1)


class ScalarHead(nn.Module):
    def __init__(self, in_features: int) -> None:
        super().__init__()
        self.mlp = nn.Sequential(
            nn.Linear(in_features, 256),
            nn.ReLU(),
            nn.Linear(256, 64),
            nn.ReLU(),
            nn.Linear(64, 1),
            nn.Softplus(),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.mlp(x)


class CircularSmoother(nn.Module):
    """Single-channel circular convolution over the angular bins."""

    def __init__(self, kernel_size: int = SMOOTH_KERNEL) -> None:
        super().__init__()
        self.pad = kernel_size // 2
        self.conv = nn.Conv1d(1, 1, kernel_size, bias=False)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        padded = F.pad(z.unsqueeze(1), (self.pad, self.pad), mode="circular")
        return self.conv(padded).squeeze(1)


class ApsHead(nn.Module):
    def __init__(self, in_features: int, dropout: float = 0.1) -> None:
        super().__init__()
        self.proj = nn.Sequential(
            nn.Linear(in_features, APS_HIDDEN),
            nn.LayerNorm(APS_HIDDEN),
            nn.ReLU(),
            nn.Dropout(dropout),
            nn.Linear(APS_HIDDEN, APS_BINS),
        )
        self.smooth = CircularSmoother()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        z_raw = self.proj(x)
        z = RAW_WEIGHT * z_raw + SMOOTH_WEIGHT * self.smooth(z_raw)
        return torch.sigmoid(z)


# ─── Full model ──────────────────────────────────────────────────────────────


class ChannelPredictor(nn.Module):
    """Multimodal predictor for one target, built from a :class:`ModelConfig`."""

    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        self.config = config
        width = config.feature_width
        branches: dict[str, nn.Module] = {}
        for modality in config.modalities:
            if modality == "semantic":
                backbone = build_backbone(
                    config.backbone,
                    pretrained=config.pretrained,
                    freeze=config.freeze_early_stages,
                )
                branches[modality] = SemanticBranch(
                    backbone, width, config.semantic_dropout
                )
            elif modality == "depth":
                branches[modality] = DepthBranch(width)
            else:
                branches[modality] = LocationBranch(
                    config.location_mean, config.location_std, width
                )
        self.branches = nn.ModuleDict(branches)
        self.fusion = SEGatedFusion(len(branches), width)
        fused = len(branches) * width
        self.head: nn.Module = (
            ApsHead(fused, config.aps_dropout)
            if config.target == "aps"
            else ScalarHead(fused)
        )

    @property
    def modalities(self) -> tuple[str, ...]:
        return tuple(self.branches.keys())

    def branch_features(self, batch: Mapping[str, torch.Tensor]) -> list[torch.Tensor]:
        feats = []
        for modality, branch in self.branches.items():
            missing = [k for k in MODALITY_INPUTS[modality] if k not in batch]
            if missing:
                msg = f"batch lacks {missing} for active modality {modality!r}"
                raise ModalityError(msg)
            args = [batch[k] for k in MODALITY_INPUTS[modality]]
            feats.append(branch(*args))
        return feats

    def encode(
        self, batch: Mapping[str, torch.Tensor]
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Return the gated fused vector and the per-sample gate."""
        return self.fusion(self.branch_features(batch))

    def forward(self, batch: Mapping[str, torch.Tensor]) -> torch.Tensor:
        fused, _ = self.encode(batch)
        return self.head(fused)

    def parameter_groups(
        self, lr: float, semantic_lr: float | None
    ) -> list[dict[str, Any]]:
        """Optimizer groups; the semantic branch may use its own learning rate."""
        semantic = [
            p
            for name, p in self.named_parameters()
            if name.startswith("branches.semantic.") and p.requires_grad
        ]
        others = [
            p
            for name, p in self.named_parameters()
            if not name.startswith("branches.semantic.") and p.requires_grad
        ]
        if semantic_lr is None or not semantic:
            return [{"params": semantic + others, "lr": lr, "name": "all"}]
        return [
            {"params": semantic, "lr": semantic_lr, "name": "semantic"},
            {"params": others, "lr": lr, "name": "others"},
        ]

    def frozen_parameter_names(self) -> list[str]:
        return [n for n, p in self.named_parameters() if not p.requires_grad]
