"""Three-party semi-honest secure inference for 8-bit quantized CNNs.

Computation runs over replicated 2-of-3 secret sharing on Z_{2^k}; every
secure result can be checked against a bit-exact integer-only cleartext
reference (the oracle module).
"""

from .ring import DEFAULT_WIDTH, Ring, RingElement
from .session import PartySession, TruncMode, make_local_sessions

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_WIDTH",
    "Ring",
    "RingElement",
    "PartySession",
    "TruncMode",
    "make_local_sessions",
    "__version__",
]
