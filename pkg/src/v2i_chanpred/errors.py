"""Exception hierarchy shared by every module of the package.

The command line maps any :class:`ChanPredError` to a one-line diagnostic
``error: <ClassName>: <message>`` and exit code 1.
"""

from __future__ import annotations


class ChanPredError(Exception):
    """Base class of all errors raised on purpose by this package."""


class ConfigError(ChanPredError):
    """Raised when a configuration file cannot be read or validated."""


# ─── Channel statistics ──────────────────────────────────────────────────────


class EmptyMpcSetError(ChanPredError):
    """Raised when a statistic is requested for an MPC set without components."""

    def __init__(self, snapshot_id: str | None = None) -> None:
        msg = "empty MPC set"
        if snapshot_id is not None:
            msg += f" (snapshot {snapshot_id})"
        super().__init__(msg)


class ConsistencyError(ChanPredError):
    """Raised when an internal numerical invariant is violated."""


# ─── Simulation ──────────────────────────────────────────────────────────────


class SceneGenerationError(ChanPredError):
    """Raised when scene placement stays infeasible after bounded retries."""


class TrajectoryError(ChanPredError):
    """Raised when a receiver trajectory cannot be laid on the road."""


# ─── Dataset ─────────────────────────────────────────────────────────────────


class UnknownClassError(ChanPredError):
    """Raised when a class map holds an id the palette does not cover."""


class DatasetFormatError(ChanPredError):
    """Raised when a dataset directory is malformed."""


class VersionMismatchError(DatasetFormatError):
    """Raised when a stored format version is not the supported one."""


class HashMismatchError(DatasetFormatError):
    """Raised when stored content does not match the manifest hash."""


class TruncatedTensorError(DatasetFormatError):
    """Raised when a tensor file is shorter than its header announces."""


class UnknownAreaError(ChanPredError):
    """Raised when a split asks for an area the manifest does not contain."""


class UnpairedDatasetError(ChanPredError):
    """Raised when raw and masked dataset variants do not share snapshot ids."""


# ─── Model and training ──────────────────────────────────────────────────────


class ModalityError(ChanPredError):
    """Raised when a batch lacks a tensor required by an active modality."""


class ShapeMismatchError(ChanPredError):
    """Raised when tensors or sequences have incompatible shapes."""


class UnknownBackboneError(ChanPredError):
    """Raised when a backbone id is not registered."""


class CheckpointNotFoundError(ChanPredError):
    """Raised when a run directory has no checkpoint."""

    def __init__(self, path: object) -> None:
        super().__init__(f"checkpoint not found: {path}")


class CheckpointFormatError(ChanPredError):
    """Raised when a checkpoint file is malformed or of another version."""


class TargetMismatchError(ChanPredError):
    """Raised when a checkpoint was trained for another target."""


class NonFiniteLossError(ChanPredError):
    """Raised when a training loss becomes NaN or infinite."""


class ReportError(ChanPredError):
    """Raised when an experiment or run directory cannot be reported."""
