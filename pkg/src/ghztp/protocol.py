"""Three-party controlled teleportation over a shared GHZ state.

Alice holds the signal qubit D and her GHZ share A, Bob holds B, and Charlie
supervises with C. Alice Bell-measures (D, A) and broadcasts the result; Bob
and Charlie each apply their local correction, bringing B, C to the common
form alpha|00> + beta|11>. Charlie then measures C in the (|0> ± |1>)/sqrt(2)
basis and sends his result to Bob, whose final conditional correction
recovers the signal on B.

Qubit roles map to register indices D->0, A->1, B->2, C->3, so with the
most-significant-first ordering of :mod:`ghztp.qsim` amplitude indices read
like |DABC> kets.
"""

from __future__ import annotations

import functools
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Union

import numpy as np

from .qsim import (
    CNOT,
    HADAMARD,
    IDENTITY,
    PAULI_X,
    PAULI_Z,
    PLUS_MINUS,
    ZX,
    BellOutcome,
    CharlieOutcome,
    ForcedSelector,
    NORM_REPAIR_TOL,
    OutcomeSelector,
    SeededSelector,
    StateVector,
    Unitary2x2,
    ValidationError,
    apply_single,
    apply_two,
    fidelity_pure,
    measure_bell,
    measure_in_basis,
    new_basis_state,
    partial_trace,
    pure_state_from_density,
    tensor,
)


class PhaseError(RuntimeError):
    """An operation was attempted out of protocol order."""


class Role(Enum):
    ALICE = "alice"
    BOB = "bob"
    CHARLIE = "charlie"


class Phase(Enum):
    INIT = "init"
    BELL_MEASURED = "bell_measured"
    CORRECTED = "corrected"
    CHARLIE_MEASURED = "charlie_measured"
    DONE = "done"


# Qubit index of each role label in the 4-qubit session register.
QUBIT_D, QUBIT_A, QUBIT_B, QUBIT_C = 0, 1, 2, 3
DEFAULT_ROLE_MAP = {"D": QUBIT_D, "A": QUBIT_A, "B": QUBIT_B, "C": QUBIT_C}

# Outcome -> (correction on B, correction on C), applied after Alice's broadcast.
BELL_CORRECTION_TABLE: dict[BellOutcome, tuple[Unitary2x2, Unitary2x2]] = {
    BellOutcome.PHI_PLUS: (IDENTITY, IDENTITY),
    BellOutcome.PHI_MINUS: (IDENTITY, PAULI_Z),
    BellOutcome.PSI_PLUS: (PAULI_X, PAULI_X),
    BellOutcome.PSI_MINUS: (PAULI_X, ZX),
}

# Outcome -> correction on B, applied after Charlie's message.
CHARLIE_CORRECTION_TABLE: dict[CharlieOutcome, Unitary2x2] = {
    CharlieOutcome.PLUS: IDENTITY,
    CharlieOutcome.MINUS: PAULI_Z,
}


class SignalState:
    """The unknown qubit alpha|0> + beta|1> to be teleported.

    Renormalized on construction when the norm is within NORM_REPAIR_TOL of 1,
    rejected otherwise.
    """

    __slots__ = ("alpha", "beta")

    def __init__(self, alpha: complex, beta: complex):
        a, b = complex(alpha), complex(beta)
        for value in (a, b):
            if not (math.isfinite(value.real) and math.isfinite(value.imag)):
                raise ValidationError("signal amplitudes must be finite")
        norm = math.sqrt(abs(a) ** 2 + abs(b) ** 2)
        if abs(norm - 1.0) > NORM_REPAIR_TOL:
            raise ValidationError(f"signal norm {norm} is not within {NORM_REPAIR_TOL} of 1")
        self.alpha = a / norm
        self.beta = b / norm

    def __eq__(self, other) -> bool:
        if not isinstance(other, SignalState):
            return NotImplemented
        return self.alpha == other.alpha and self.beta == other.beta

    def __hash__(self):
        return hash((self.alpha, self.beta))

    def __repr__(self) -> str:
        return f"SignalState(alpha={self.alpha!r}, beta={self.beta!r})"


def random_signal(rng: random.Random) -> SignalState:
    """Haar-ish random signal: four gaussian components, normalized."""
    while True:
        a = complex(rng.gauss(0.0, 1.0), rng.gauss(0.0, 1.0))
        b = complex(rng.gauss(0.0, 1.0), rng.gauss(0.0, 1.0))
        norm = math.sqrt(abs(a) ** 2 + abs(b) ** 2)
        if norm > 1e-6:
            return SignalState(a / norm, b / norm)


# --- trace events -----------------------------------------------------------


@dataclass(frozen=True)
class GhzPrepared:
    pass


@dataclass(frozen=True)
class SignalPrepared:
    pass


@dataclass(frozen=True)
class BellMeasured:
    outcome: BellOutcome
    probability: float


@dataclass(frozen=True)
class CorrectionApplied:
    role: Role
    unitary: str


@dataclass(frozen=True)
class CharlieMeasured:
    outcome: CharlieOutcome
    probability: float


@dataclass(frozen=True)
class BobCorrected:
    unitary: str


@dataclass(frozen=True)
class Finished:
    fidelity: float


@dataclass(frozen=True)
class ClassicalMessage:
    """A measurement result broadcast over the classical channel."""

    seq: int
    sender: Role
    recipients: frozenset[Role]
    payload: Union[BellOutcome, CharlieOutcome]

    def __post_init__(self):
        if self.sender in self.recipients:
            raise ValidationError("message sender cannot be a recipient")
        if not self.recipients:
            raise ValidationError("message needs at least one recipient")


TraceEvent = Union[
    GhzPrepared,
    SignalPrepared,
    BellMeasured,
    CorrectionApplied,
    CharlieMeasured,
    BobCorrected,
    Finished,
    ClassicalMessage,
]


@dataclass
class ProtocolTrace:
    """Ordered record of the quantum operations and classical messages of one run."""

    events: list[TraceEvent] = field(default_factory=list)

    def lines(self) -> list[str]:
        return [event_line(e) for e in self.events]

    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines())

    def messages(self) -> list[ClassicalMessage]:
        return [e for e in self.events if isinstance(e, ClassicalMessage)]


def _fmt(x: float) -> str:
    return repr(float(x))


def event_line(event: TraceEvent) -> str:
    """One-line serialized form with stable field order, for byte-level comparison."""
    if isinstance(event, GhzPrepared):
        return "GhzPrepared"
    if isinstance(event, SignalPrepared):
        return "SignalPrepared"
    if isinstance(event, BellMeasured):
        return f"BellMeasured outcome={event.outcome.value} probability={_fmt(event.probability)}"
    if isinstance(event, CorrectionApplied):
        return f"CorrectionApplied role={event.role.value} unitary={event.unitary}"
    if isinstance(event, CharlieMeasured):
        return f"CharlieMeasured outcome={event.outcome.value} probability={_fmt(event.probability)}"
    if isinstance(event, BobCorrected):
        return f"BobCorrected unitary={event.unitary}"
    if isinstance(event, Finished):
        return f"Finished fidelity={_fmt(event.fidelity)}"
    if isinstance(event, ClassicalMessage):
        recipients = ",".join(sorted(r.value for r in event.recipients))
        return (
            f"Classical seq={event.seq} sender={event.sender.value} "
            f"recipients={recipients} payload={event.payload.value}"
        )
    raise TypeError(f"unknown trace event {event!r}")


def _parse_payload(text: str) -> Union[BellOutcome, CharlieOutcome]:
    try:
        return BellOutcome(text)
    except ValueError:
        return CharlieOutcome(text)


def parse_event_line(line: str) -> TraceEvent:
    """Inverse of :func:`event_line`."""
    kind, _, rest = line.strip().partition(" ")
    fields = dict(token.split("=", 1) for token in rest.split()) if rest else {}
    if kind == "GhzPrepared":
        return GhzPrepared()
    if kind == "SignalPrepared":
        return SignalPrepared()
    if kind == "BellMeasured":
        return BellMeasured(BellOutcome(fields["outcome"]), float(fields["probability"]))
    if kind == "CorrectionApplied":
        return CorrectionApplied(Role(fields["role"]), fields["unitary"])
    if kind == "CharlieMeasured":
        return CharlieMeasured(CharlieOutcome(fields["outcome"]), float(fields["probability"]))
    if kind == "BobCorrected":
        return BobCorrected(fields["unitary"])
    if kind == "Finished":
        return Finished(float(fields["fidelity"]))
    if kind == "Classical":
        return ClassicalMessage(
            seq=int(fields["seq"]),
            sender=Role(fields["sender"]),
            recipients=frozenset(Role(r) for r in fields["recipients"].split(",")),
            payload=_parse_payload(fields["payload"]),
        )
    raise ValueError(f"unknown trace line: {line!r}")


def parse_trace_text(text: str) -> ProtocolTrace:
    return ProtocolTrace([parse_event_line(line) for line in text.splitlines() if line.strip()])


def trace_order_errors(events: list[TraceEvent]) -> list[str]:
    """Dependency-order violations in an event sequence (empty list = consistent).

    Checks that every measurement precedes the message carrying its result and
    that every correction follows the message it is conditioned on. Applies
    only to events actually present, so traces that skip identity corrections
    still validate.
    """

    def pos(predicate) -> int | None:
        for i, e in enumerate(events):
            if predicate(e):
                return i
        return None

    errors: list[str] = []

    def require(before: int | None, after: int | None, label: str) -> None:
        if before is not None and after is not None and before >= after:
            errors.append(label)

    p_ghz = pos(lambda e: isinstance(e, GhzPrepared))
    p_signal = pos(lambda e: isinstance(e, SignalPrepared))
    p_bell = pos(lambda e: isinstance(e, BellMeasured))
    p_alice_msg = pos(lambda e: isinstance(e, ClassicalMessage) and e.sender is Role.ALICE)
    p_charlie = pos(lambda e: isinstance(e, CharlieMeasured))
    p_charlie_msg = pos(lambda e: isinstance(e, ClassicalMessage) and e.sender is Role.CHARLIE)
    p_bob = pos(lambda e: isinstance(e, BobCorrected))
    p_finished = pos(lambda e: isinstance(e, Finished))

    require(p_ghz, p_bell, "GhzPrepared must precede BellMeasured")
    require(p_signal, p_bell, "SignalPrepared must precede BellMeasured")
    require(p_bell, p_alice_msg, "BellMeasured must precede Alice's broadcast")
    for i, e in enumerate(events):
        if isinstance(e, CorrectionApplied):
            require(p_alice_msg, i, f"correction by {e.role.value} precedes Alice's broadcast")
            if e.role is Role.CHARLIE:
                require(i, p_charlie, "Charlie measured before applying his correction")
    require(p_alice_msg, p_charlie, "CharlieMeasured must follow Alice's broadcast")
    require(p_charlie, p_charlie_msg, "CharlieMeasured must precede Charlie's message")
    require(p_charlie_msg, p_bob, "BobCorrected must follow Charlie's message")
    require(p_charlie_msg, p_finished, "Finished must follow Charlie's message")
    require(p_bob, p_finished, "BobCorrected must precede Finished")

    seqs = [e.seq for e in events if isinstance(e, ClassicalMessage)]
    if any(b <= a for a, b in zip(seqs, seqs[1:])):
        errors.append(f"message seq numbers not strictly increasing: {seqs}")
    return errors


# --- session -----------------------------------------------------------------


@dataclass
class SessionRegister:
    """One protocol run: the 4-qubit register, its phase, and its trace."""

    state: StateVector
    role_map: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_ROLE_MAP))
    phase: Phase = Phase.INIT
    trace: ProtocolTrace = field(default_factory=ProtocolTrace)
    next_seq: int = 1

    def __post_init__(self):
        if sorted(self.role_map) != ["A", "B", "C", "D"] or sorted(
            self.role_map.values()
        ) != [0, 1, 2, 3]:
            raise ValidationError(f"role_map must map D,A,B,C onto 0..3, got {self.role_map}")

    def _require_phase(self, expected: Phase, op: str) -> None:
        if self.phase is not expected:
            raise PhaseError(f"{op} requires phase {expected.value}, session is {self.phase.value}")

    def _emit_message(self, sender: Role, recipients: frozenset[Role], payload) -> ClassicalMessage:
        msg = ClassicalMessage(self.next_seq, sender, recipients, payload)
        self.next_seq += 1
        self.trace.events.append(msg)
        return msg


@functools.cache
def prepare_ghz() -> StateVector:
    """(|000> + |111>)/sqrt(2) built as H on the first qubit, then two CNOTs.

    The state is a session-independent constant and StateVector is immutable,
    so the one instance is shared by every run.
    """
    s = new_basis_state(3, 0)
    s = apply_single(s, 0, HADAMARD)
    s = apply_two(s, 0, 1, CNOT)
    s = apply_two(s, 0, 2, CNOT)
    return s


@functools.lru_cache(maxsize=256)
def prepare_signal(s: SignalState) -> StateVector:
    # Cached: a Monte-Carlo loop prepares the same signal thousands of times.
    return StateVector(1, [s.alpha, s.beta])


def compose_session(signal: SignalState) -> SessionRegister:
    """Signal ⊗ GHZ as one 4-qubit register with roles D, A, B, C at 0..3."""
    ghz = prepare_ghz()
    sig = prepare_signal(signal)
    session = SessionRegister(state=tensor(sig, ghz))
    session.trace.events.append(GhzPrepared())
    session.trace.events.append(SignalPrepared())
    return session


def alice_bell_measure(
    session: SessionRegister, selector: OutcomeSelector
) -> tuple[BellOutcome, ClassicalMessage]:
    """Alice's Bell measurement of (D, A), broadcast to Bob and Charlie."""
    session._require_phase(Phase.INIT, "alice_bell_measure")
    outcome, probability, post = measure_bell(
        session.state, session.role_map["D"], session.role_map["A"], selector
    )
    session.state = post
    session.phase = Phase.BELL_MEASURED
    session.trace.events.append(BellMeasured(outcome, probability))
    msg = session._emit_message(Role.ALICE, frozenset({Role.BOB, Role.CHARLIE}), outcome)
    return outcome, msg


def apply_bell_correction(session: SessionRegister, outcome: BellOutcome) -> None:
    """Bob's and Charlie's local corrections, restoring BC to alpha|00> + beta|11>."""
    session._require_phase(Phase.BELL_MEASURED, "apply_bell_correction")
    u_b, u_c = BELL_CORRECTION_TABLE[outcome]
    session.state = apply_single(session.state, session.role_map["B"], u_b)
    session.trace.events.append(CorrectionApplied(Role.BOB, u_b.name))
    session.state = apply_single(session.state, session.role_map["C"], u_c)
    session.trace.events.append(CorrectionApplied(Role.CHARLIE, u_c.name))
    session.phase = Phase.CORRECTED


def charlie_measure(
    session: SessionRegister, selector: OutcomeSelector
) -> tuple[CharlieOutcome, ClassicalMessage]:
    """Charlie's (|0> ± |1>)/sqrt(2) measurement of C, result sent to Bob."""
    session._require_phase(Phase.CORRECTED, "charlie_measure")
    k, probability, post = measure_in_basis(
        session.state, session.role_map["C"], PLUS_MINUS, selector
    )
    outcome = list(CharlieOutcome)[k]
    session.state = post
    session.phase = Phase.CHARLIE_MEASURED
    session.trace.events.append(CharlieMeasured(outcome, probability))
    msg = session._emit_message(Role.CHARLIE, frozenset({Role.BOB}), outcome)
    return outcome, msg


def bob_correct(session: SessionRegister, outcome: CharlieOutcome) -> StateVector:
    """Bob's final conditional correction; returns his recovered single-qubit state."""
    session._require_phase(Phase.CHARLIE_MEASURED, "bob_correct")
    u = CHARLIE_CORRECTION_TABLE[outcome]
    session.state = apply_single(session.state, session.role_map["B"], u)
    session.trace.events.append(BobCorrected(u.name))
    session.phase = Phase.DONE
    return pure_state_from_density(partial_trace(session.state, [session.role_map["B"]]))


@dataclass
class ProtocolResult:
    trace: ProtocolTrace
    bob_state: StateVector
    fidelity: float
    path_probability: float
    bell_outcome: BellOutcome
    charlie_outcome: CharlieOutcome

    def to_json(self) -> dict:
        return {
            "trace": self.trace.lines(),
            "bob_state": [[a.real, a.imag] for a in self.bob_state.amplitudes],
            "fidelity": self.fidelity,
            "path_probability": self.path_probability,
            "bell_outcome": self.bell_outcome.value,
            "charlie_outcome": self.charlie_outcome.value,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ProtocolResult":
        return cls(
            trace=ProtocolTrace([parse_event_line(line) for line in data["trace"]]),
            bob_state=StateVector._wrap(
                1, np.array([complex(re, im) for re, im in data["bob_state"]])
            ),
            fidelity=float(data["fidelity"]),
            path_probability=float(data["path_probability"]),
            bell_outcome=BellOutcome(data["bell_outcome"]),
            charlie_outcome=CharlieOutcome(data["charlie_outcome"]),
        )


def run_protocol(
    signal: SignalState,
    seed: int | None = None,
    forced: tuple[BellOutcome, CharlieOutcome] | None = None,
) -> ProtocolResult:
    """Execute all protocol phases in order and score Bob's recovered state.

    Exactly one of ``seed`` (Born-rule sampling from one session PRNG) or
    ``forced`` (a fixed Bell/Charlie outcome pair) selects the branch.
    """
    if (seed is None) == (forced is None):
        raise ValueError("pass exactly one of seed or forced")
    if forced is not None:
        bell_selector: OutcomeSelector = ForcedSelector(list(BellOutcome).index(forced[0]))
        charlie_selector: OutcomeSelector = ForcedSelector(list(CharlieOutcome).index(forced[1]))
    else:
        shared = SeededSelector(seed)
        bell_selector = charlie_selector = shared

    session = compose_session(signal)
    bell_outcome, _ = alice_bell_measure(session, bell_selector)
    apply_bell_correction(session, bell_outcome)
    charlie_outcome, _ = charlie_measure(session, charlie_selector)
    bob_state = bob_correct(session, charlie_outcome)

    p_bell = next(e for e in session.trace.events if isinstance(e, BellMeasured)).probability
    p_charlie = next(e for e in session.trace.events if isinstance(e, CharlieMeasured)).probability
    fidelity = fidelity_pure(
        partial_trace(session.state, [session.role_map["B"]]), prepare_signal(signal)
    )
    session.trace.events.append(Finished(fidelity))
    return ProtocolResult(
        trace=session.trace,
        bob_state=bob_state,
        fidelity=fidelity,
        path_probability=p_bell * p_charlie,
        bell_outcome=bell_outcome,
        charlie_outcome=charlie_outcome,
    )
