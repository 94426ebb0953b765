"""Initial-offset placement for mesh-pull p2p live streaming.

Placement schemes, offset-lag dynamics, a seeded swarm simulator and the
trace estimators that go with them.
"""

__version__ = "0.1.0"

from offsetlag.errors import (
    DomainError,
    InvariantViolation,
    NoReferenceError,
    OffsetLagError,
    TraceCorruptionError,
    TraceFormatError,
    SchemaVersionError,
    UndefinedRatioError,
    UnplacedPeerError,
)

__all__ = [
    "DomainError",
    "InvariantViolation",
    "NoReferenceError",
    "OffsetLagError",
    "TraceCorruptionError",
    "TraceFormatError",
    "SchemaVersionError",
    "UndefinedRatioError",
    "UnplacedPeerError",
    "__version__",
]
