"""Exception types raised across the package."""

from __future__ import annotations


class ChunkDriftError(Exception):
    """Base class for all package errors."""


class InvalidState(ChunkDriftError, ValueError):
    """A state or action carries non-finite components."""


class InvalidPair(ChunkDriftError, ValueError):
    """Two sequences that must be aligned are not."""


class DomainError(ChunkDriftError, ValueError):
    """Normalized time outside [0, 1] passed to an unclamped profile."""


class ConfigError(ChunkDriftError, ValueError):
    """Invalid configuration. ``path`` names the offending field when known."""

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class Unsupported(ChunkDriftError, NotImplementedError):
    """Operation not defined for the given profile kind."""


class GroundingError(ChunkDriftError, LookupError):
    """The instructed target object is absent from the scene."""


class NoKeyframe(ChunkDriftError):
    """No frame of a demonstration comes within the activation distance."""


class SimulationDiverged(ChunkDriftError, RuntimeError):
    """The simulated end-effector state became non-finite."""


class ASRUndefined(ChunkDriftError, ZeroDivisionError):
    """Attack success rate requested while the clean success rate is zero."""


class InsufficientData(ChunkDriftError, ValueError):
    """Series too short for the requested finite-difference stencil."""


class MissingPrediction(ChunkDriftError, LookupError):
    """A chunk offered to the ensemble has no prediction for the timestep."""


class FormatError(ChunkDriftError, ValueError):
    """Malformed JSONL input. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)
