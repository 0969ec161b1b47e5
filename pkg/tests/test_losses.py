from __future__ import annotations

import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st
from torch.autograd import gradcheck

from v2i_chanpred.config import LossConfig
from v2i_chanpred.errors import ShapeMismatchError
from v2i_chanpred.losses import composite_aps_loss
from v2i_chanpred.losses import cos_sim
from v2i_chanpred.losses import low_power_weights
from v2i_chanpred.losses import mse_loss
from v2i_chanpred.losses import relative_total_power
from v2i_chanpred.losses import shape_loss
from v2i_chanpred.losses import weighted_l1
from v2i_chanpred.losses import weighted_mse

BINS = 360


def one_hot(index: int, dtype: torch.dtype = torch.float64) -> torch.Tensor:
    out = torch.zeros(1, BINS, dtype=dtype)
    out[0, index] = 1.0
    return out


def random_aps(rows: int, seed: int) -> torch.Tensor:
    gen = torch.Generator().manual_seed(seed)
    aps = torch.rand(rows, BINS, generator=gen, dtype=torch.float64)
    return aps / aps.max(dim=1, keepdim=True).values


def test_disjoint_one_hot_spectra() -> None:
    target, prediction = one_hot(0), one_hot(180)
    assert weighted_mse(target, prediction).item() == pytest.approx(0.025)
    assert weighted_l1(target, prediction).item() == pytest.approx(0.025)
    assert shape_loss(target, prediction).item() == pytest.approx(1.0)
    assert relative_total_power(target, prediction).item() == pytest.approx(0.0)
    total, breakdown = composite_aps_loss(target, prediction)
    assert total.item() == pytest.approx(1.00225, abs=1e-6)
    assert breakdown["total"] == pytest.approx(1.00225, abs=1e-6)
    assert set(breakdown) == {"shape", "wmse", "wl1", "tp", "total"}


def test_perfect_prediction_has_no_loss() -> None:
    aps = random_aps(4, seed=0)
    total, _ = composite_aps_loss(aps, aps.clone())
    assert total.item() <= 1e-6


def test_threshold_is_strict() -> None:
    target = torch.tensor([[0.4999, 0.5, 0.5001]])
    torch.testing.assert_close(
        low_power_weights(target, tau=0.5, omega_low=8.0),
        torch.tensor([[8.0, 1.0, 1.0]]),
    )


def test_cosine_epsilon_keeps_self_similarity_below_one() -> None:
    p = torch.tensor([[1e-4, 0.0]], dtype=torch.float64)
    value = cos_sim(p, p).item()
    assert value < 1.0
    assert value == pytest.approx(1e-8 / (1e-8 + 1e-8))


def test_weights_come_from_the_config() -> None:
    target, prediction = one_hot(0), one_hot(180)
    config = LossConfig(omega_mse=0.0, omega_l1=0.0, omega_tp=0.0)
    total, _ = composite_aps_loss(target, prediction, config)
    assert total.item() == pytest.approx(1.0)
    heavy = LossConfig(omega_low=1.0)
    _, breakdown = composite_aps_loss(target, prediction, heavy)
    assert breakdown["wmse"] == pytest.approx(2 / BINS)


def test_relative_total_power() -> None:
    target = torch.tensor([[1.0, 1.0], [2.0, 0.0]])
    prediction = torch.tensor([[0.5, 0.5], [2.0, 1.0]])
    assert relative_total_power(target, prediction).item() == pytest.approx(0.5)


def test_mse() -> None:
    assert mse_loss(torch.zeros(2), torch.tensor([3.0, 4.0])).item() == 12.5


@pytest.mark.parametrize(
    ("target", "prediction"),
    [
        (torch.zeros(2, BINS), torch.zeros(3, BINS)),
        (torch.zeros(0, BINS), torch.zeros(0, BINS)),
    ],
)
def test_bad_batches(target: torch.Tensor, prediction: torch.Tensor) -> None:
    with pytest.raises(ShapeMismatchError):
        composite_aps_loss(target, prediction)


@pytest.mark.parametrize("seed", range(10))
def test_gradient_matches_finite_differences(seed: int) -> None:
    target = random_aps(10, seed)
    prediction = random_aps(10, seed + 100).requires_grad_()
    assert gradcheck(
        lambda p: composite_aps_loss(target, p)[0],
        (prediction,),
        eps=1e-6,
        atol=1e-8,
        rtol=1e-4,
    )


row_scales = st.lists(st.floats(0.1, 10.0), min_size=4, max_size=4).map(
    lambda s: torch.tensor(s, dtype=torch.float64).unsqueeze(1)
)


@given(st.integers(0, 2**16), row_scales, row_scales)
def test_cosine_ignores_positive_row_scaling(
    seed: int, a: torch.Tensor, b: torch.Tensor
) -> None:
    p, q = random_aps(4, seed), random_aps(4, seed + 1)
    torch.testing.assert_close(
        cos_sim(a * p, b * q), cos_sim(p, q), rtol=0.0, atol=1e-7
    )


@given(st.integers(0, 2**16), row_scales)
def test_shape_loss_ignores_prediction_scale(seed: int, scale: torch.Tensor) -> None:
    target, prediction = random_aps(4, seed), random_aps(4, seed + 1)
    assert shape_loss(target, scale * prediction).item() == pytest.approx(
        shape_loss(target, prediction).item(), abs=1e-7
    )


@pytest.mark.parametrize("seed", range(5))
def test_duplicated_rows_leave_the_mean_losses_unchanged(seed: int) -> None:
    target, prediction = random_aps(3, seed), random_aps(3, seed + 7)
    twice_t, twice_p = torch.cat([target, target]), torch.cat([prediction, prediction])
    for loss in (shape_loss, weighted_mse, weighted_l1, relative_total_power):
        assert loss(twice_t, twice_p).item() == pytest.approx(
            loss(target, prediction).item(), rel=1e-12, abs=1e-15
        )
    _, once = composite_aps_loss(target, prediction)
    _, doubled = composite_aps_loss(twice_t, twice_p)
    assert doubled == pytest.approx(once, rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_unit_low_weight_reduces_to_plain_errors(seed: int) -> None:
    target, prediction = random_aps(4, seed), random_aps(4, seed + 3)
    torch.testing.assert_close(
        weighted_mse(target, prediction, omega_low=1.0), mse_loss(target, prediction)
    )
    torch.testing.assert_close(
        weighted_l1(target, prediction, omega_low=1.0),
        torch.mean(torch.abs(prediction - target)),
    )
    assert weighted_mse(target, prediction).item() > mse_loss(
        target, prediction
    ).item()
