"""Exception types shared across the package."""


class QcpError(Exception):
    """Base class for all qcplab errors."""


class DimensionError(QcpError, ValueError):
    """Incompatible or invalid dimensions (vector length, subspace dim, layout mismatch)."""


class ResourceLimitError(QcpError, RuntimeError):
    """A configured cap (qubit count, enumeration size, coin space) would be exceeded."""


class ProtocolViolationError(QcpError, RuntimeError):
    """A game participant requested information the protocol does not grant it."""
