"""Exception types shared across the package."""


class D2RError(Exception):
    """Common base so callers can catch every package-defined failure."""


class ContractViolation(D2RError, ValueError):
    """An operation was called with arguments that break its shape/value contract."""


class SingularRetraction(D2RError, RuntimeError):
    """QR retraction hit a rank-deficient W + xi."""


class DegenerateKernel(D2RError, RuntimeError):
    """Polar decomposition requested for a (near-)singular matrix."""


class InitializationOrderError(D2RError, RuntimeError):
    """A data-dependent module was used before its one-time initialization."""


class NumericFault(D2RError, RuntimeError):
    """Non-finite values appeared where the contract forbids them."""


class CheckpointError(D2RError, RuntimeError):
    """Malformed or mismatched checkpoint file."""


class ConfigError(D2RError, ValueError):
    """Malformed config file or unknown key."""
