"""Controlled teleportation of one qubit through a shared GHZ state.

Simulator substrate (qsim), the three-party protocol with a supervising
third party (protocol), verification and security analyses (verify), and a
line-oriented network harness that runs the same protocol across processes
(wire, netharness). The ``ghztp`` command line fronts all of it.
"""

from .qsim import (
    ATOL_ACCUMULATED,
    ATOL_ALGEBRAIC,
    BellOutcome,
    CharlieOutcome,
    DensityMatrix,
    ForcedSelector,
    ImpossibleOutcomeError,
    MIN_FORCED_PROBABILITY,
    NORM_REPAIR_TOL,
    SeededSelector,
    StateVector,
    Unitary2x2,
    ValidationError,
)
from .protocol import (
    PhaseError,
    ProtocolResult,
    Role,
    SessionRegister,
    SignalState,
    run_protocol,
)

__version__ = "0.1.0"

__all__ = [
    "ATOL_ACCUMULATED",
    "ATOL_ALGEBRAIC",
    "BellOutcome",
    "CharlieOutcome",
    "DensityMatrix",
    "ForcedSelector",
    "ImpossibleOutcomeError",
    "MIN_FORCED_PROBABILITY",
    "NORM_REPAIR_TOL",
    "PhaseError",
    "ProtocolResult",
    "Role",
    "SeededSelector",
    "SessionRegister",
    "SignalState",
    "StateVector",
    "Unitary2x2",
    "ValidationError",
    "run_protocol",
    "__version__",
]
