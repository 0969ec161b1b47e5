"""Ground-truth channel descriptors computed from multipath components.

Five targets are derived from an :class:`MpcSet`:

* **PL**  path loss, ``-10 log10(sum |gamma_l|^2)`` in dB;
* **DS**  RMS delay spread, power-weighted standard deviation of delays in ns;
* **ASA / ASD**  circular azimuth spread ``sqrt(-2 ln R)`` at Rx / Tx in degrees;
* **APS**  360-bin angular power spectrum of arrival azimuths, peak-normalised.

Phase is carried on every component but never enters a statistic.
MPC snapshots are exchanged as JSON lines, one record per snapshot::

    {"snapshot_id": "a1-00003",
     "mpcs": [[amplitude, phase, delay_ns, aod_deg, aoa_deg], ...]}
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from dataclasses import field
from typing import TYPE_CHECKING
from typing import Literal

import numpy as np

from v2i_chanpred.errors import ConsistencyError
from v2i_chanpred.errors import EmptyMpcSetError

if TYPE_CHECKING:
    from collections.abc import Iterable
    from collections.abc import Iterator
    from pathlib import Path

    from numpy.typing import NDArray

APS_BINS = 360
ANGLE_CLAMP = 1e-12
RADICAND_TOL = 1e-12

Side = Literal["departure", "arrival"]


def wrap_deg(angle: float) -> float:
    """Wrap an angle to the half-open interval [0, 360)."""
    wrapped = angle % 360.0
    # -1e-17 % 360.0 rounds to 360.0
    return 0.0 if wrapped >= 360.0 else wrapped  # noqa: PLR2004


def wrap_rad(angle: float) -> float:
    """Wrap an angle to the half-open interval [0, 2*pi)."""
    wrapped = angle % math.tau
    return 0.0 if wrapped >= math.tau else wrapped


@dataclass(frozen=True, slots=True)
class Mpc:
    """One multipath component."""

    amplitude: float
    phase: float
    delay_ns: float
    aod_deg: float
    aoa_deg: float

    def __post_init__(self) -> None:
        if not self.amplitude > 0:
            msg = f"amplitude must be > 0, got {self.amplitude}"
            raise ValueError(msg)
        if not self.delay_ns >= 0:
            msg = f"delay must be >= 0 ns, got {self.delay_ns}"
            raise ValueError(msg)
        if not 0 <= self.phase < math.tau:
            msg = f"phase must be in [0, 2pi), got {self.phase}"
            raise ValueError(msg)
        for name in ("aod_deg", "aoa_deg"):
            value = getattr(self, name)
            if not 0 <= value < 360:  # noqa: PLR2004
                msg = f"{name} must be in [0, 360), got {value}"
                raise ValueError(msg)

    @property
    def power(self) -> float:
        return self.amplitude * self.amplitude

    def as_row(self) -> list[float]:
        return [self.amplitude, self.phase, self.delay_ns, self.aod_deg, self.aoa_deg]


@dataclass(frozen=True, slots=True)
class MpcSet:
    """The components observed in one channel snapshot."""

    components: tuple[Mpc, ...]
    snapshot_id: str = ""

    def __len__(self) -> int:
        return len(self.components)

    def __iter__(self) -> Iterator[Mpc]:
        return iter(self.components)

    def _require_nonempty(self) -> None:
        if not self.components:
            raise EmptyMpcSetError(self.snapshot_id or None)

    def powers(self) -> NDArray[np.float64]:
        self._require_nonempty()
        amp = np.array([c.amplitude for c in self.components], dtype=np.float64)
        return amp * amp

    def delays(self) -> NDArray[np.float64]:
        return np.array([c.delay_ns for c in self.components], dtype=np.float64)

    def azimuths(self, side: Side) -> NDArray[np.float64]:
        attr = "aod_deg" if side == "departure" else "aoa_deg"
        return np.array([getattr(c, attr) for c in self.components], dtype=np.float64)

    def without(self, index: int) -> MpcSet:
        comps = self.components[:index] + self.components[index + 1 :]
        return MpcSet(comps, self.snapshot_id)


@dataclass(frozen=True)
class ChannelLabels:
    """The five prediction targets of one snapshot."""

    pl_db: float
    ds_ns: float
    asa_deg: float
    asd_deg: float
    aps: NDArray[np.float64] = field(repr=False)

    def __post_init__(self) -> None:
        if min(self.ds_ns, self.asa_deg, self.asd_deg) < 0:
            msg = "spreads must be non-negative"
            raise ValueError(msg)
        aps = np.asarray(self.aps, dtype=np.float64)
        if aps.shape != (APS_BINS,):
            msg = f"aps must have {APS_BINS} bins, got shape {aps.shape}"
            raise ValueError(msg)
        if aps.min() < 0 or aps.max() != 1.0:
            msg = "aps must lie in [0, 1] with max exactly 1"
            raise ValueError(msg)
        aps.setflags(write=False)
        object.__setattr__(self, "aps", aps)

    def scalar(self, target: str) -> float:
        return {
            "pl": self.pl_db,
            "ds": self.ds_ns,
            "asa": self.asa_deg,
            "asd": self.asd_deg,
        }[target]


# ─── Statistics ──────────────────────────────────────────────────────────────


def total_power(mpcs: MpcSet) -> float:
    """Return ``sum_l amplitude_l^2`` (linear, dimensionless)."""
    if not mpcs.components:
        raise EmptyMpcSetError(mpcs.snapshot_id or None)
    return math.fsum(c.power for c in mpcs.components)


def path_loss_db(mpcs: MpcSet) -> float:
    """Return the path loss ``-10 log10(total_power)`` in dB."""
    return -10.0 * math.log10(total_power(mpcs))


def rms_delay_spread_ns(mpcs: MpcSet) -> float:
    """Return the power-weighted RMS delay spread in ns.

    Computed as ``sqrt(E_p[tau^2] - E_p[tau]^2)``. Delays are referenced to the
    earliest component first, which leaves the value unchanged and keeps the
    subtraction well conditioned.

    Raises
    ------
    ConsistencyError
        If the radicand is below ``-1e-12``.
    """
    p = mpcs.powers()
    p = p / p.sum()
    tau = mpcs.delays()
    tau = tau - tau.min()
    mean = float(np.dot(p, tau))
    radicand = float(np.dot(p, tau * tau)) - mean * mean
    if radicand < -RADICAND_TOL:
        msg = f"negative delay-spread radicand {radicand:.3e}"
        raise ConsistencyError(msg)
    return math.sqrt(max(radicand, 0.0))


def azimuth_spread_deg(mpcs: MpcSet, side: Side) -> float:
    """Return the circular azimuth spread ``sqrt(-2 ln R)`` in degrees.

    ``R`` is the magnitude of the power-weighted mean resultant vector of the
    selected side's azimuths, clamped to ``[1e-12, 1]`` before the logarithm.
    """
    p = mpcs.powers()
    phi = np.deg2rad(mpcs.azimuths(side))
    resultant = np.sum(p * np.exp(1j * phi)) / p.sum()
    r = min(max(abs(resultant), ANGLE_CLAMP), 1.0)
    return math.degrees(math.sqrt(-2.0 * math.log(r)))


def aps_unnormalized(mpcs: MpcSet, side: Side = "arrival") -> NDArray[np.float64]:
    """Accumulate component power into 1-degree azimuth bins ``[k, k+1)``."""
    p = mpcs.powers()
    bins = np.floor(mpcs.azimuths(side)).astype(np.int64)
    bins = np.clip(bins, 0, APS_BINS - 1)
    return np.bincount(bins, weights=p, minlength=APS_BINS).astype(np.float64)


def aps_360(mpcs: MpcSet, side: Side = "arrival") -> NDArray[np.float64]:
    """Return the 360-bin angular power spectrum normalised to a peak of 1."""
    spectrum = aps_unnormalized(mpcs, side)
    return spectrum / spectrum.max()


def labels_from_mpcs(mpcs: MpcSet) -> ChannelLabels:
    """Assemble the five targets of one snapshot."""
    return ChannelLabels(
        pl_db=path_loss_db(mpcs),
        ds_ns=rms_delay_spread_ns(mpcs),
        asa_deg=azimuth_spread_deg(mpcs, "arrival"),
        asd_deg=azimuth_spread_deg(mpcs, "departure"),
        aps=aps_360(mpcs, "arrival"),
    )


# ─── Interchange ─────────────────────────────────────────────────────────────


def mpcset_to_record(mpcs: MpcSet) -> dict[str, object]:
    return {"snapshot_id": mpcs.snapshot_id, "mpcs": [c.as_row() for c in mpcs]}


def mpcset_from_record(record: dict[str, object]) -> MpcSet:
    rows = record["mpcs"]
    if not isinstance(rows, list):
        msg = "'mpcs' must be a list of 5-element rows"
        raise TypeError(msg)
    comps = tuple(Mpc(*map(float, row)) for row in rows)
    return MpcSet(comps, str(record["snapshot_id"]))


def write_mpc_jsonl(path: Path, sets: Iterable[MpcSet]) -> None:
    """Write MPC snapshots, one JSON record per line."""
    with path.open("w", encoding="utf-8") as fh:
        for mpcs in sets:
            fh.write(json.dumps(mpcset_to_record(mpcs)) + "\n")


def read_mpc_jsonl(path: Path) -> list[MpcSet]:
    with path.open(encoding="utf-8") as fh:
        return [mpcset_from_record(json.loads(line)) for line in fh if line.strip()]
