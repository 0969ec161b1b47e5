"""Parameter, FLOP and latency accounting.

FLOPs are counted as two per multiply-accumulate over convolution and
fully-connected layers only; activations, normalization, pooling and the
element-wise gate are not counted.

* Conv: ``2 * k_h * k_w * (C_in / groups) * C_out * H_out * W_out``
* Conv1d: ``2 * k * (C_in / groups) * C_out * L_out``
* Linear: ``2 * in * out`` per input row
"""

from __future__ import annotations

import math
import platform
import time
from dataclasses import dataclass
from typing import TYPE_CHECKING

import torch
from torch import nn

from v2i_chanpred.model import ChannelPredictor

if TYPE_CHECKING:
    from v2i_chanpred.config import ModelConfig

WARMUP_RUNS = 5
# a representative street-side coordinate pair for synthetic batches
_PROBE_TX = (39.9500, 116.3400)
_PROBE_RX = (39.9495, 116.3390)


@dataclass(frozen=True)
class LatencyReport:
    mean_ms: float
    samples_per_s: float
    batch_size: int
    repetitions: int
    hardware: str


def _as_model(model: nn.Module | ModelConfig) -> nn.Module:
    return model if isinstance(model, nn.Module) else ChannelPredictor(model)


def count_params(model: nn.Module | ModelConfig) -> tuple[int, int]:
    """Return (total, trainable) parameter counts; frozen weights are not trainable."""
    net = _as_model(model)
    total = sum(p.numel() for p in net.parameters())
    trainable = sum(p.numel() for p in net.parameters() if p.requires_grad)
    return total, trainable


def module_flops(module: nn.Module, inputs: torch.Tensor, output: torch.Tensor) -> int:
    """FLOPs of one forward call of a conv or linear layer (0 for others)."""
    if isinstance(module, nn.Conv2d):
        kh, kw = module.kernel_size
        c_in = module.in_channels // module.groups
        h_out, w_out = output.shape[-2:]
        positions = h_out * w_out * output.shape[0]
        return 2 * kh * kw * c_in * module.out_channels * positions
    if isinstance(module, nn.Conv1d):
        (k,) = module.kernel_size
        c_in = module.in_channels // module.groups
        return 2 * k * c_in * module.out_channels * output.shape[-1] * output.shape[0]
    if isinstance(module, nn.Linear):
        rows = math.prod(inputs.shape[:-1])
        return 2 * module.in_features * module.out_features * rows
    return 0


def probe_batch(batch_size: int, image_size: int = 224) -> dict[str, torch.Tensor]:
    """A synthetic batch carrying every modality."""
    shape = (batch_size, 3, image_size, image_size)
    return {
        "semantic": torch.rand(shape, generator=torch.Generator().manual_seed(0)),
        "depth": torch.rand(shape, generator=torch.Generator().manual_seed(1)),
        "tx_geo": torch.tensor([_PROBE_TX] * batch_size, dtype=torch.float64),
        "rx_geo": torch.tensor([_PROBE_RX] * batch_size, dtype=torch.float64),
    }


def estimate_flops(
    model: nn.Module | ModelConfig, image_size: int = 224, batch_size: int = 1
) -> int:
    """Per-sample FLOPs of one forward pass, collected with forward hooks."""
    net = _as_model(model)
    total = 0

    def hook(
        module: nn.Module, args: tuple[torch.Tensor, ...], out: torch.Tensor
    ) -> None:
        nonlocal total
        total += module_flops(module, args[0], out)

    handles = [
        m.register_forward_hook(hook)
        for m in net.modules()
        if isinstance(m, (nn.Conv1d, nn.Conv2d, nn.Linear))
    ]
    was_training = net.training
    net.eval()
    try:
        with torch.no_grad():
            net(probe_batch(batch_size, image_size))
    finally:
        for h in handles:
            h.remove()
        net.train(was_training)
    return total // batch_size


def hardware_descriptor(device: str = "cpu") -> str:
    cpu = platform.processor() or platform.machine() or "unknown-cpu"
    parts = [
        cpu,
        f"{platform.system()} {platform.release()}",
        f"torch {torch.__version__}",
        f"{torch.get_num_threads()} threads",
        device,
    ]
    if device.startswith("cuda") and torch.cuda.is_available():
        parts.append(torch.cuda.get_device_name(torch.device(device)))
    return " | ".join(parts)


def measure_latency(
    model: nn.Module | ModelConfig,
    batch_size: int = 2,
    repetitions: int = 20,
    *,
    warmup: int = WARMUP_RUNS,
    image_size: int = 224,
    device: str = "cpu",
) -> LatencyReport:
    """Mean wall-clock forward time over ``repetitions`` after ``warmup`` runs."""
    if repetitions < 1:
        msg = f"repetitions must be >= 1, got {repetitions}"
        raise ValueError(msg)
    warmup = max(warmup, WARMUP_RUNS)
    net = _as_model(model).to(device)
    net.eval()
    batch = {k: v.to(device) for k, v in probe_batch(batch_size, image_size).items()}
    timings: list[float] = []
    with torch.no_grad():
        for i in range(warmup + repetitions):
            start = time.perf_counter()
            net(batch)
            if device.startswith("cuda"):
                torch.cuda.synchronize()
            if i >= warmup:
                timings.append(time.perf_counter() - start)
    mean_ms = 1000.0 * sum(timings) / len(timings)
    return LatencyReport(
        mean_ms=mean_ms,
        samples_per_s=batch_size / (mean_ms / 1000.0),
        batch_size=batch_size,
        repetitions=repetitions,
        hardware=hardware_descriptor(device),
    )
