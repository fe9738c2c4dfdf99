"""
Exception hierarchy for the two-stage reconstruction pipeline.

Every error raised on purpose by the package derives from TsrError so that the
CLI and the HTTP service can map failures to exit statuses / status codes.
"""

from __future__ import annotations


class TsrError(Exception):
    """Base class for all reconstruction errors."""


class InvalidArgumentError(TsrError, ValueError):
    """A precondition of an operation was violated."""


class InputError(TsrError):
    """Unreadable, malformed or inconsistent input (images, libraries, config)."""


class DegenerateTargetError(InputError):
    """Target pattern carries no usable descriptor information (single phase)."""


class ConfigurationError(InputError):
    """A cluster configuration breaks containment, separation or occupancy consistency."""


class ScaleMismatchError(InvalidArgumentError):
    """Configuration and cost context disagree on domain size or scales."""


class PackingError(TsrError):
    """Random sequential placement could not fit a cluster."""

    def __init__(self, cluster_index: int, message: str | None = None) -> None:
        self.cluster_index = cluster_index
        super().__init__(message or f"could not place cluster {cluster_index}")


class SynthesisError(TsrError):
    """A surrogate cluster could not reach the target interface."""

    def __init__(self, cluster_index: int, message: str | None = None) -> None:
        self.cluster_index = cluster_index
        super().__init__(message or f"synthesis failed for cluster {cluster_index}")


class LibraryAuditError(TsrError):
    """A surrogate library does not match its target inclusions."""

    def __init__(self, cluster_index: int, message: str) -> None:
        self.cluster_index = cluster_index
        super().__init__(f"cluster {cluster_index}: {message}")
