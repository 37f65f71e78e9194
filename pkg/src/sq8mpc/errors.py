"""Exception hierarchy shared by all subsystems.

Exit-code mapping for the CLI: VerificationError -> 1, ConfigError -> 2,
TransportError -> 3.
"""


class Sq8Error(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 2


class ConfigError(Sq8Error):
    """Invalid configuration: ring widths, party ids, model invariants."""

    exit_code = 2


class WidthMismatchError(ConfigError):
    """Operands live in rings of different widths."""


class ShapeError(ConfigError):
    """Vector or tensor shapes do not line up."""


class ModelFormatError(ConfigError):
    """SQ8 bytes are malformed or violate a model invariant."""


class TransportError(Sq8Error):
    """Channel failure: peer disconnected, timeout, handshake mismatch."""

    exit_code = 3

    def __init__(self, message: str, peer: int | None = None):
        super().__init__(message if peer is None else f"peer {peer}: {message}")
        self.peer = peer


class FramingError(TransportError):
    """A frame on the wire could not be parsed."""


class ConsistencyError(Sq8Error):
    """Replicated shares disagree on a common component (debug aid only)."""

    exit_code = 2


class VerificationError(Sq8Error):
    """Secure result differs from the cleartext reference."""

    exit_code = 1
