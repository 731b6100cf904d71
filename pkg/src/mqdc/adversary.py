"""Pluggable eavesdropper and impersonation models for protocol sessions.

Attack models hook into the quantum channel legs of a session: they run
synchronously inside each transmission, own their record book and random
substream exclusively, and afterwards may try to reconstruct the transferred
message from their records plus the public transcript.  They never see the
user registry or any party-private state, so what an attack can do here is
exactly what the modeled eavesdropper could do physically.

The two canonical models are intercept-resend taps (measure a transiting
qubit in the Z or X basis and forward the collapsed state, which is
equivalent to resending the observed eigenstate) and impersonation (decode an
authentication sequence with a guessed identity).  Detection and leakage
rates of both are measured by the experiment harness and pinned against
brute-force amplitude oracles in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .messages import (
    CheckPositions,
    FlipAnnouncement,
    SwapAnnouncement,
    SwapCheckPositions,
    Transcript,
)
from .protocol import (
    AuthResult,
    ChannelLeg,
    ConfigError,
    IdSequence,
    RunReport,
    UserRegistry,
    authenticate,
)
from .quantum import BellClass, BellKind, QubitRef, StateRegister
from .seeding import derive


class Basis(Enum):
    """Measurement basis of an intercept: computational (Z) or Hadamard (X)."""

    Z = "Z"
    X = "X"


@dataclass(frozen=True)
class TapRecord:
    """One intercepted qubit: which leg, which position, what was observed."""

    leg: ChannelLeg
    position: int
    outcome: int


@dataclass
class AttackReport:
    """Summary of what an attack did and recovered in one session."""

    intercepted_count: int
    detection_events: dict[str, int]
    recovered_message: Optional[tuple[int, ...]]
    recovery_method: str


def tap_intercept_resend(register: StateRegister, qubit: QubitRef, basis: Basis,
                         record_book: list[TapRecord], *, leg: ChannelLeg,
                         position: int) -> int:
    """Measure a transiting qubit and forward the collapsed state.

    An X-basis tap is a Hadamard, a Z measurement, and a Hadamard back.
    Forwarding the collapsed qubit is exactly measure-and-resend of the
    observed eigenstate, so no qubit replacement is needed.
    """
    if basis is Basis.X:
        register.apply_hadamard(qubit)
    outcome = register.measure_z(qubit)
    if basis is Basis.X:
        register.apply_hadamard(qubit)
    record_book.append(TapRecord(leg, position, outcome))
    return outcome


class AttackModel:
    """No-op base: every hook does nothing, observationally absent."""

    name = "no-attack"

    def bind_session(self, seed: int) -> None:
        """Reset per-session state; called once before the session starts."""

    def identity_for_decode(self, user_id: str, id_length: int) -> Optional[IdSequence]:
        """Identity the given user decodes with; None means the honest one."""
        return None

    def on_qubit_in_transit(self, register: StateRegister, qubit: QubitRef,
                            leg: ChannelLeg, position: int) -> None:
        """Channel hook, run while `qubit` is in transit on `leg`."""

    def reconstruct_message(self, transcript: Transcript) -> Optional[tuple[int, ...]]:
        """Message bits recoverable from records + public transcript, if any."""
        return None

    def build_report(self, run_report: RunReport) -> Optional[AttackReport]:
        """Attack summary for the session report; None when nothing happened."""
        return None

    def descriptor(self) -> dict:
        return {"name": self.name}


class NoAttack(AttackModel):
    """Explicit honest baseline; transcripts match having no attack at all."""


def _detection_events(run_report: RunReport) -> dict[str, int]:
    return {
        "auth": sum(m for m, _ in run_report.auth_mismatches.values()),
        "channel_check": run_report.channel_check_errors[0],
        "swap_check": run_report.swap_check_errors[0],
    }


class InterceptResend(AttackModel):
    """Measure-and-forward tap on one channel leg, for a fraction of qubits.

    With `fraction` < 1 each position is tapped or skipped by a deterministic
    per-position decision from the attack's own substream, independent of
    processing order.
    """

    name = "intercept-resend"

    def __init__(self, leg: ChannelLeg, basis: Basis, fraction: float = 1.0):
        if not isinstance(leg, ChannelLeg):
            raise ConfigError(f"leg: not a channel leg: {leg!r}")
        if not isinstance(basis, Basis):
            raise ConfigError(f"basis: not a basis: {basis!r}")
        if not (0.0 < fraction <= 1.0):
            raise ConfigError("fraction: must be in (0, 1]")
        self.leg = leg
        self.basis = basis
        self.fraction = fraction
        self.record_book: list[TapRecord] = []
        self._seed = 0

    def bind_session(self, seed: int) -> None:
        self._seed = seed
        self.record_book = []

    def _taps(self, position: int) -> bool:
        if self.fraction >= 1.0:
            return True
        leg_ordinal = list(ChannelLeg).index(self.leg)
        u = derive(self._seed, leg_ordinal, position) / float(1 << 64)
        return u < self.fraction

    def on_qubit_in_transit(self, register: StateRegister, qubit: QubitRef,
                            leg: ChannelLeg, position: int) -> None:
        if leg is self.leg and self._taps(position):
            tap_intercept_resend(register, qubit, self.basis, self.record_book,
                                 leg=leg, position=position)

    def reconstruct_message(self, transcript: Transcript) -> Optional[tuple[int, ...]]:
        if self.leg is not ChannelLeg.A_SEQUENCE or self.basis is not Basis.Z:
            return None
        return reconstruct_message(self.record_book, transcript)

    def build_report(self, run_report: RunReport) -> AttackReport:
        recovered = run_report.eve_recovered_message
        if self.leg is ChannelLeg.A_SEQUENCE and self.basis is Basis.Z:
            method = "intercepted bits xor announced classes xor flip bits"
        else:
            method = "none"
        return AttackReport(
            intercepted_count=len(self.record_book),
            detection_events=_detection_events(run_report),
            recovered_message=recovered,
            recovery_method=method,
        )

    def descriptor(self) -> dict:
        return {"name": self.name, "leg": self.leg.value,
                "basis": self.basis.value, "fraction": self.fraction}


class ImpersonateUser(AttackModel):
    """Decode one user's authentication sequence with a guessed identity.

    `guessed_identity` None means a fresh uniformly random guess per session,
    drawn from the attack substream; the identity length is public protocol
    metadata, the registry is never consulted.
    """

    name = "impersonate"

    def __init__(self, target: str, guessed_identity: Optional[IdSequence] = None):
        if not target or not isinstance(target, str):
            raise ConfigError("target: must be a nonempty user id")
        self.target = target
        self.guessed_identity = guessed_identity
        self._rng = np.random.default_rng(0)

    def bind_session(self, seed: int) -> None:
        self._rng = np.random.default_rng(seed)

    def identity_for_decode(self, user_id: str, id_length: int) -> Optional[IdSequence]:
        if user_id != self.target:
            return None
        if self.guessed_identity is not None:
            return self.guessed_identity
        return IdSequence.random(id_length, self._rng)

    def build_report(self, run_report: RunReport) -> AttackReport:
        return AttackReport(
            intercepted_count=0,
            detection_events=_detection_events(run_report),
            recovered_message=None,
            recovery_method="none",
        )

    def descriptor(self) -> dict:
        guessed = ("uniform-random" if self.guessed_identity is None
                   else "".join(str(b) for b in self.guessed_identity.bits))
        return {"name": self.name, "target": self.target, "guessed_id": guessed}


def _slot_layout(transcript: Transcript):
    """Public slot structure: (checked, survivors, message slots, classes, flips).

    Everything needed to align per-slot announcements is public: the checked
    positions, the class list (one per survivor, in order), the swap-check
    positions, and the flip bits (one per message slot, in order).
    """
    announcement = transcript.first(SwapAnnouncement)
    flips = transcript.first(FlipAnnouncement)
    if announcement is None or flips is None:
        return None
    check = transcript.first(CheckPositions)
    checked = set(check.positions) if check is not None else set()
    swap_check = transcript.first(SwapCheckPositions)
    swap_checked = set(swap_check.positions) if swap_check is not None else set()
    total = len(announcement.classes) + len(checked)
    survivors = [p for p in range(total) if p not in checked]
    class_by_slot = dict(zip(survivors, announcement.classes))
    message_slots = [p for p in survivors if p not in swap_checked]
    if len(message_slots) != len(flips.bits):
        return None
    return class_by_slot, message_slots, flips.bits


def reconstruct_message(record_book: list[TapRecord],
                        transcript: Transcript) -> Optional[tuple[int, ...]]:
    """Rebuild the message from Z-intercepts of the initiator's transmitted
    qubits plus public announcements.

    A Z-collapsed transmitted qubit with outcome e pins the responder's
    outcome to e XOR (announced class is psi) regardless of the initiator's
    secret state choice; XOR with the flip bit yields the message bit.
    Returns None when any needed record or announcement is missing.
    """
    layout = _slot_layout(transcript)
    if layout is None:
        return None
    class_by_slot, message_slots, flips = layout
    taps = {r.position: r.outcome for r in record_book
            if r.leg is ChannelLeg.A_SEQUENCE}
    bits = []
    for p, flip in zip(message_slots, flips):
        if p not in taps:
            return None
        responder = taps[p] ^ (class_by_slot[p] is BellClass.PSI)
        bits.append(responder ^ flip)
    return tuple(bits)


def trent_reconstruction(trent_kinds: tuple[BellKind, ...],
                         transcript: Transcript) -> Optional[tuple[int, ...]]:
    """The center's best message guess from its own full Bell outcomes.

    Without the initiator's secret state choices the responder's outcome is
    uniformly random from the center's view; the guess below fixes the
    unknown initiator contribution to zero, so its per-bit accuracy against
    the true message is chance level.  Measuring that is the point.
    """
    layout = _slot_layout(transcript)
    if layout is None:
        return None
    _, message_slots, flips = layout
    check = transcript.first(CheckPositions)
    checked = set(check.positions) if check is not None else set()
    total = len(trent_kinds) + len(checked)
    survivors = [p for p in range(total) if p not in checked]
    if len(survivors) != len(trent_kinds):
        return None
    kind_by_slot = dict(zip(survivors, trent_kinds))
    bits = []
    for p, flip in zip(message_slots, flips):
        responder_guess = kind_by_slot[p].bell_class is BellClass.PSI
        bits.append(responder_guess ^ flip)
    return tuple(bits)


def impersonation_attempt(register: StateRegister, registry: UserRegistry,
                          user_id: str, guessed_identity: IdSequence,
                          *, transcript: Optional[Transcript] = None) -> AuthResult:
    """Authentication round decoded with a guess instead of the true identity."""
    return authenticate(register, registry, user_id,
                        decode_identity=guessed_identity, transcript=transcript)


_LEGS = {leg.value: leg for leg in ChannelLeg}
_BASES = {basis.value: basis for basis in Basis}


def build_attack(descriptor: dict) -> AttackModel:
    """Build an attack model from a configuration descriptor.

    Raises ConfigError naming the offending field, so the harness can prefix
    the scenario path.
    """
    if not isinstance(descriptor, dict):
        raise ConfigError(f"scenario: must be a mapping, got {descriptor!r}")
    known = {"no-attack": _build_no_attack,
             "intercept-resend": _build_intercept_resend,
             "impersonate": _build_impersonate}
    name = descriptor.get("name")
    if name not in known:
        raise ConfigError(f"name: unknown attack {name!r}")
    extra = set(descriptor) - {"name"} - _KNOWN_FIELDS[name]
    if extra:
        raise ConfigError(f"{sorted(extra)[0]}: unexpected field for {name!r}")
    return known[name](descriptor)


_KNOWN_FIELDS = {
    "no-attack": set(),
    "intercept-resend": {"leg", "basis", "fraction"},
    "impersonate": {"target", "guessed_id"},
}


def _build_no_attack(descriptor: dict) -> NoAttack:
    return NoAttack()


def _build_intercept_resend(descriptor: dict) -> InterceptResend:
    leg = descriptor.get("leg")
    if leg not in _LEGS:
        raise ConfigError(f"leg: must be one of {sorted(_LEGS)}, got {leg!r}")
    basis = descriptor.get("basis")
    if basis not in _BASES:
        raise ConfigError(f"basis: must be one of {sorted(_BASES)}, got {basis!r}")
    fraction = descriptor.get("fraction", 1.0)
    if not isinstance(fraction, (int, float)) or isinstance(fraction, bool):
        raise ConfigError(f"fraction: must be a number, got {fraction!r}")
    return InterceptResend(_LEGS[leg], _BASES[basis], float(fraction))


def _build_impersonate(descriptor: dict) -> ImpersonateUser:
    target = descriptor.get("target")
    if not target or not isinstance(target, str):
        raise ConfigError(f"target: must be a user id, got {target!r}")
    guessed = descriptor.get("guessed_id", "uniform-random")
    if guessed == "uniform-random":
        identity = None
    elif isinstance(guessed, str) and guessed and set(guessed) <= {"0", "1"}:
        identity = IdSequence(tuple(int(c) for c in guessed))
    else:
        raise ConfigError(
            f"guessed_id: must be 'uniform-random' or a 0/1 string, got {guessed!r}")
    return ImpersonateUser(target, identity)
