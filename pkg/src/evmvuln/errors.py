"""Exception hierarchy shared across the package."""

from __future__ import annotations


class EvmVulnError(Exception):
    """Base class for every error raised by this package."""


class MalformedHex(EvmVulnError, ValueError):
    def __init__(self, message: str, position: int | None = None):
        super().__init__(message if position is None else f"{message} at position {position}")
        self.position = position


class InconsistentListing(EvmVulnError, ValueError):
    pass


class ShapeMismatch(EvmVulnError, ValueError):
    pass


class KernelTooLong(ShapeMismatch):
    pass


class EmptyCorpus(EvmVulnError, ValueError):
    pass


class EmptyDataset(EvmVulnError, ValueError):
    pass


class DimensionMismatch(EvmVulnError, ValueError):
    pass


class EmptyIndex(EvmVulnError, ValueError):
    pass


class LengthMismatch(EvmVulnError, ValueError):
    pass


class EmptyMatrix(EvmVulnError, ValueError):
    pass


class DegenerateClass(EvmVulnError, ValueError):
    pass


class ModelFileError(EvmVulnError):
    """Base for model-container failures."""


class BadMagic(ModelFileError):
    pass


class VersionMismatch(ModelFileError):
    pass


class ChecksumMismatch(ModelFileError):
    pass


class MalformedRecord(EvmVulnError, ValueError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line


class DuplicateAddress(EvmVulnError, ValueError):
    pass


class MissingLabels(EvmVulnError, ValueError):
    pass


class RpcError(EvmVulnError):
    pass


class RpcTimeout(RpcError):
    pass


class EmptyCode(EvmVulnError):
    """The queried address holds no code."""


class SingleClassDataset(UserWarning):
    """Training labels contain only one class; the model will be degenerate."""
