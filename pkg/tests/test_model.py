from __future__ import annotations

import math

import pytest
import torch

from v2i_chanpred.config import ModelConfig
from v2i_chanpred.errors import ModalityError
from v2i_chanpred.errors import ShapeMismatchError
from v2i_chanpred.errors import UnknownBackboneError
from v2i_chanpred.model import APS_BINS
from v2i_chanpred.model import BACKBONES
from v2i_chanpred.model import COMPACT_CHANNELS
from v2i_chanpred.model import CircularSmoother
from v2i_chanpred.model import ChannelPredictor
from v2i_chanpred.model import LocationBranch
from v2i_chanpred.model import SEGatedFusion
from v2i_chanpred.model import build_backbone
from v2i_chanpred.model import haversine_torch

SIZE = 32


def batch(n: int = 2, seed: int = 0) -> dict[str, torch.Tensor]:
    gen = torch.Generator().manual_seed(seed)
    return {
        "semantic": torch.rand(n, 3, SIZE, SIZE, generator=gen),
        "depth": torch.rand(n, 3, SIZE, SIZE, generator=gen),
        "tx_geo": torch.tensor([[39.95, 116.34]] * n, dtype=torch.float64),
        "rx_geo": torch.tensor(
            [[39.949, 116.339 + 1e-4 * i] for i in range(n)], dtype=torch.float64
        ),
    }


def predictor(target: str = "pl", **fields: object) -> ChannelPredictor:
    torch.manual_seed(0)
    config = ModelConfig(backbone="compact-conv", target=target, **fields)
    return ChannelPredictor(config).eval()


def test_scalar_output_is_positive() -> None:
    out = predictor("ds")(batch(3))
    assert out.shape == (3, 1)
    assert torch.all(out > 0)


def test_aps_output_lies_in_the_unit_interval() -> None:
    out = predictor("aps")(batch(2))
    assert out.shape == (2, APS_BINS)
    assert torch.all((out > 0) & (out < 1))


def test_gate_is_one_scalar_per_sample() -> None:
    model = predictor("pl")
    fused, gate = model.encode(batch(4))
    assert fused.shape == (4, 3 * 256)
    assert gate.shape == (4,)
    assert torch.all((gate > 0) & (gate < 1))


def test_fusion_scales_the_concatenation() -> None:
    torch.manual_seed(1)
    fusion = SEGatedFusion(2, width=8)
    a, b = torch.randn(5, 8), torch.randn(5, 8)
    fused, gate = fusion([a, b])
    torch.testing.assert_close(fused, torch.cat([a, b], dim=1) * gate[:, None])
    assert fusion.fc1.out_features == 1


@pytest.mark.parametrize(
    ("modalities", "branches"),
    [
        (("semantic",), 1),
        (("semantic", "depth"), 2),
        (("location", "semantic"), 2),
        (("semantic", "depth", "location"), 3),
    ],
)
def test_modality_subsets(modalities: tuple[str, ...], branches: int) -> None:
    model = predictor("pl", modalities=modalities)
    assert len(model.modalities) == branches
    assert model.modalities[0] == "semantic"
    assert model.fusion.fc1.in_features == branches * 256
    assert model(batch()).shape == (2, 1)


def test_inactive_inputs_are_ignored() -> None:
    model = predictor("pl", modalities=("semantic",))
    base = batch(2)
    other = {**base, "depth": torch.zeros(2, 3, SIZE, SIZE), "rx_geo": base["tx_geo"]}
    torch.testing.assert_close(model(base), model(other))
    semantic_only = {"semantic": base["semantic"]}
    torch.testing.assert_close(model(base), model(semantic_only))


def test_missing_input_of_an_active_modality() -> None:
    model = predictor("pl", modalities=("semantic", "location"))
    with pytest.raises(ModalityError, match="location"):
        model({"semantic": batch()["semantic"]})


def test_wrong_image_shape() -> None:
    model = predictor("pl", modalities=("semantic",))
    with pytest.raises(ShapeMismatchError, match="B x 3 x H x W"):
        model({"semantic": torch.rand(2, 1, SIZE, SIZE)})


def test_unknown_backbone() -> None:
    with pytest.raises(UnknownBackboneError, match="known: residual-34"):
        build_backbone("resnet-9000")


@pytest.mark.parametrize(
    "name",
    [
        pytest.param(n, marks=pytest.mark.slow) if n == "vgg16" else n
        for n in sorted(BACKBONES)
    ],
)
def test_backbones_emit_flat_features(name: str) -> None:
    backbone = build_backbone(name).eval()
    with torch.no_grad():
        out = backbone(torch.rand(1, 3, 64, 64))
    assert out.shape == (1, backbone.out_features)


@pytest.mark.parametrize("shift", [1, 90, 180, 359])
def test_circular_smoother_is_shift_equivariant(shift: int) -> None:
    torch.manual_seed(2)
    smoother = CircularSmoother()
    z = torch.randn(3, APS_BINS)
    torch.testing.assert_close(
        smoother(torch.roll(z, shift, dims=1)),
        torch.roll(smoother(z), shift, dims=1),
    )


def test_averaging_kernel_wraps_around() -> None:
    smoother = CircularSmoother()
    with torch.no_grad():
        smoother.conv.weight.fill_(1 / 5)
    z = torch.zeros(1, APS_BINS)
    z[0, 0] = 5.0
    out = smoother(z)[0]
    for k in (358, 359, 0, 1, 2):
        assert out[k].item() == pytest.approx(1.0)
    assert out[3].item() == 0.0
    assert out[357].item() == 0.0


def test_haversine_torch() -> None:
    tx = torch.tensor([[0.0, 0.0]], dtype=torch.float64)
    rx = torch.tensor([[1.0, 0.0]], dtype=torch.float64)
    expected = 6_371_000.0 * math.pi / 180
    assert haversine_torch(tx, rx).item() == pytest.approx(expected)
    assert haversine_torch(rx, tx).item() == pytest.approx(expected)
    assert expected == pytest.approx(111_195.0, abs=1.0)


def test_location_branch_standardizes_distance() -> None:
    branch = LocationBranch(mean=100.0, std=10.0, width=8)
    assert branch.mean.item() == 100.0
    assert branch.std.item() == 10.0
    assert "mean" in branch.state_dict()
    b = batch(2)
    assert branch(b["tx_geo"], b["rx_geo"]).shape == (2, 8)


def test_frozen_stages_do_not_move() -> None:
    model = predictor("pl", modalities=("semantic", "depth")).train()
    frozen = set(model.frozen_parameter_names())
    assert frozen
    assert all(n.startswith("branches.semantic.backbone.") for n in frozen)
    before = {n: p.detach().clone() for n, p in model.named_parameters()}
    stats_before = {
        n: b.detach().clone()
        for n, b in model.named_buffers()
        if n.startswith("branches.semantic.backbone.body.0.")
    }
    groups = model.parameter_groups(1e-2, None)
    optimizer = torch.optim.Adam(groups)
    for step in range(3):
        optimizer.zero_grad()
        model(batch(4, seed=step)).sum().backward()
        optimizer.step()
    after = dict(model.named_parameters())
    for name in frozen:
        assert torch.equal(after[name], before[name]), name
    moved = [
        n for n in after if n not in frozen and not torch.equal(after[n], before[n])
    ]
    assert moved
    for name, buf in model.named_buffers():
        if name in stats_before:
            assert torch.equal(buf, stats_before[name]), name


def test_residual_frozen_stages_are_bitwise_stable() -> None:
    torch.manual_seed(0)
    config = ModelConfig(backbone="residual-34", modalities=("semantic",))
    model = ChannelPredictor(config).train()
    prefix = "branches.semantic.backbone.body."
    frozen = tuple(prefix + s for s in ("conv1.", "bn1.", "layer1.", "layer2."))
    before = {
        n: t.detach().clone()
        for n, t in model.state_dict().items()
        if n.startswith(frozen)
    }
    assert any(n.endswith("running_mean") for n in before)
    assert any(n.endswith("num_batches_tracked") for n in before)
    trained_before = model.state_dict()[prefix + "layer3.0.conv1.weight"].clone()
    optimizer = torch.optim.Adam(model.parameter_groups(1e-2, None))
    gen = torch.Generator().manual_seed(1)
    for _ in range(10):
        optimizer.zero_grad()
        out = model({"semantic": torch.rand(2, 3, 64, 64, generator=gen)})
        out.sum().backward()
        optimizer.step()
    after = model.state_dict()
    for name, value in before.items():
        assert torch.equal(after[name], value), name
    assert not torch.equal(after[prefix + "layer3.0.conv1.weight"], trained_before)


def test_compact_conv_uses_fan_out_initialization() -> None:
    torch.manual_seed(0)
    body = build_backbone("compact-conv").body
    convs = [m for m in body.modules() if isinstance(m, torch.nn.Conv2d)]
    assert len(convs) == len(COMPACT_CHANNELS) - 1
    for conv in convs[2:]:
        fan_out = conv.out_channels * 9
        std = float(conv.weight.std())
        assert std == pytest.approx(math.sqrt(2.0 / fan_out), rel=0.05)
        assert abs(float(conv.weight.mean())) < 0.1 * std


def test_parameter_groups() -> None:
    model = predictor("aps")
    groups = model.parameter_groups(3.5e-4, 3.5e-5)
    assert [g["name"] for g in groups] == ["semantic", "others"]
    assert [g["lr"] for g in groups] == [3.5e-5, 3.5e-4]
    trainable = sum(p.numel() for p in model.parameters() if p.requires_grad)
    assert sum(p.numel() for g in groups for p in g["params"]) == trainable
    (single,) = model.parameter_groups(1e-3, None)
    assert single["name"] == "all"
