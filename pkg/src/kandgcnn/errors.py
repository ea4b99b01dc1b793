"""Exception types shared across the toolkit."""


class KanDgcnnError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(KanDgcnnError, ValueError):
    """Invalid configuration, such as k >= N or a bad layer/flag combination."""


class DomainError(KanDgcnnError, ValueError):
    """Numerical input or parameter outside the admissible domain."""


class ContractError(KanDgcnnError, ValueError):
    """Shape mismatch or out-of-range index between cooperating components."""


class StateError(KanDgcnnError, RuntimeError):
    """An operation was called in the wrong order (e.g. backward before forward)."""


class NonFiniteError(KanDgcnnError, FloatingPointError):
    """A NaN or infinity appeared where a finite value is required."""


class FormatError(KanDgcnnError, ValueError):
    """Malformed binary file (bad magic, version or truncated payload)."""


class ParseError(KanDgcnnError, ValueError):
    """Malformed text input; carries the 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
