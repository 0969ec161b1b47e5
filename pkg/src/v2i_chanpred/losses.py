"""Training losses: scalar MSE and the composite angular-power-spectrum loss.

All APS terms take ``(M, 360)`` target and prediction tensors and reduce by the
arithmetic mean over samples (and bins, for the point-wise terms).
"""

from __future__ import annotations

from typing import TYPE_CHECKING

import torch

from v2i_chanpred.config import LossConfig
from v2i_chanpred.errors import ShapeMismatchError

if TYPE_CHECKING:
    from collections.abc import Mapping


def _check_pair(target: torch.Tensor, prediction: torch.Tensor) -> None:
    if target.shape != prediction.shape:
        msg = (
            f"target shape {tuple(target.shape)} does not match "
            f"prediction shape {tuple(prediction.shape)}"
        )
        raise ShapeMismatchError(msg)
    if target.numel() == 0:
        msg = "empty batch"
        raise ShapeMismatchError(msg)


def mse_loss(target: torch.Tensor, prediction: torch.Tensor) -> torch.Tensor:
    _check_pair(target, prediction)
    return torch.mean((prediction - target) ** 2)


def cos_sim(p: torch.Tensor, q: torch.Tensor, epsilon: float = 1e-8) -> torch.Tensor:
    """Row-wise ``dot(p, q) / (|p| |q| + epsilon)`` over the last axis.

    ``epsilon`` sits in the denominator sum, so ``cos_sim(p, p)`` is slightly
    below one.
    """
    if p.shape != q.shape:
        msg = f"cannot compare shapes {tuple(p.shape)} and {tuple(q.shape)}"
        raise ShapeMismatchError(msg)
    dot = torch.sum(p * q, dim=-1)
    norms = torch.linalg.vector_norm(p, dim=-1) * torch.linalg.vector_norm(q, dim=-1)
    return dot / (norms + epsilon)


def shape_loss(
    target: torch.Tensor, prediction: torch.Tensor, epsilon: float = 1e-8
) -> torch.Tensor:
    _check_pair(target, prediction)
    return 1.0 - torch.mean(cos_sim(target, prediction, epsilon))


def low_power_weights(
    target: torch.Tensor, tau: float = 0.5, omega_low: float = 8.0
) -> torch.Tensor:
    """Per-bin weights: ``omega_low`` where ``target < tau`` (strict), else 1."""
    low = (target < tau).to(target.dtype)
    return 1.0 + (omega_low - 1.0) * low


def weighted_mse(
    target: torch.Tensor,
    prediction: torch.Tensor,
    tau: float = 0.5,
    omega_low: float = 8.0,
) -> torch.Tensor:
    _check_pair(target, prediction)
    weights = low_power_weights(target, tau, omega_low)
    return torch.mean(weights * (prediction - target) ** 2)


def weighted_l1(
    target: torch.Tensor,
    prediction: torch.Tensor,
    tau: float = 0.5,
    omega_low: float = 8.0,
) -> torch.Tensor:
    _check_pair(target, prediction)
    weights = low_power_weights(target, tau, omega_low)
    return torch.mean(weights * torch.abs(prediction - target))


def relative_total_power(
    target: torch.Tensor, prediction: torch.Tensor, epsilon: float = 1e-8
) -> torch.Tensor:
    """Mean over rows of ``|sum(target) - sum(prediction)| / (sum(target) + eps)``."""
    _check_pair(target, prediction)
    t_sum = target.sum(dim=-1)
    p_sum = prediction.sum(dim=-1)
    return torch.mean(torch.abs(t_sum - p_sum) / (t_sum + epsilon))


def composite_aps_loss(
    target: torch.Tensor,
    prediction: torch.Tensor,
    config: LossConfig | None = None,
) -> tuple[torch.Tensor, dict[str, float]]:
    """Shape loss plus weighted MSE, weighted L1 and relative total-power terms.

    Returns
    -------
    tuple[torch.Tensor, dict[str, float]]
        The differentiable total and a detached per-term breakdown for logging.
    """
    config = config or LossConfig()
    tau, omega_low = config.tau_threshold, config.omega_low
    terms: Mapping[str, torch.Tensor] = {
        "shape": shape_loss(target, prediction, config.epsilon),
        "wmse": weighted_mse(target, prediction, tau, omega_low),
        "wl1": weighted_l1(target, prediction, tau, omega_low),
        "tp": relative_total_power(target, prediction, config.epsilon),
    }
    total = (
        terms["shape"]
        + config.omega_mse * terms["wmse"]
        + config.omega_l1 * terms["wl1"]
        + config.omega_tp * terms["tp"]
    )
    breakdown = {name: float(value.detach()) for name, value in terms.items()}
    breakdown["total"] = float(total.detach())
    return total, breakdown
