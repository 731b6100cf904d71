"""Party state machines and session orchestration for swap-based messaging.

One session connects two registered users through the trusted center in a
star topology: quantum channels exist only between the center and each user.
A session has two phases.

Setup/authentication: for each user the center prepares shared Bell pairs,
keeps one qubit of each, and encodes the other with a Hadamard keyed by the
user's secret identity bits before sending it.  The user decodes with the
same rule and announces its Z outcomes; the center compares against its own
retained qubits and aborts on any mismatch.

Communication: the initiator prepares one Bell pair per slot, secretly
choosing each pair's state from two alternatives; the responder prepares
matching pairs in a fixed state.  Both transmit one qubit per pair to the
center.  After a public channel check on announced positions, the center
Bell-measures the remaining transmitted qubit pairs crosswise and announces
only the phi/psi class per slot, entangling the two users' retained qubits.
The correlation rule of :func:`infer_partner_bit` then lets the initiator
infer the responder's Z outcomes, verify a sample of them, and transfer the
message by announcing which outcomes the responder must flip.

Everything a party announces goes through the ordered public
:class:`~mqdc.messages.Transcript`; everything else (identities, state
choices, unannounced outcomes) stays inside the party records, so attack
models attached to the quantum channel legs see exactly what a real
eavesdropper would.

All randomness derives from the session seed via fixed substreams (register
sampling, initiator choices, message bits, attack decisions), making the
entire run report reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

import numpy as np

from .messages import (
    Abort,
    AuthOutcomes,
    AuthRequest,
    AuthVerdict,
    CheckOutcomes,
    CheckPositions,
    FlipAnnouncement,
    SwapAnnouncement,
    SwapCheckOutcomes,
    SwapCheckPositions,
    Transcript,
)
from .quantum import BellClass, BellKind, StateRegister
from .seeding import (
    STREAM_ATTACK,
    STREAM_INITIATOR,
    STREAM_MESSAGE,
    STREAM_REGISTER,
    derive,
)


class ProtocolError(Exception):
    """Protocol-level misuse: bad arguments, out-of-order steps."""


class ConfigError(ProtocolError):
    """A configuration value violates an invariant."""


class UnknownUserError(ProtocolError):
    """A user id is not present in the registry."""


class ChannelLeg(Enum):
    """The three quantum channel legs of the star topology."""

    AUTH = "auth"                # center -> user, authentication sequences
    A_SEQUENCE = "a_sequence"    # initiator -> center, transmitted halves
    B_SEQUENCE = "b_sequence"    # responder -> center, transmitted halves


@dataclass(frozen=True)
class IdSequence:
    """A user's secret identity bit string, shared only with the center."""

    bits: tuple[int, ...]

    def __post_init__(self):
        if len(self.bits) < 1:
            raise ValueError("identity must have at least one bit")
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("identity bits must be 0 or 1")

    def __len__(self) -> int:
        return len(self.bits)

    @classmethod
    def random(cls, length: int, rng: np.random.Generator) -> "IdSequence":
        return cls(tuple(int(b) for b in rng.integers(0, 2, size=length)))


class UserRegistry:
    """The center's table of registered users and their secret identities."""

    def __init__(self):
        self._entries: dict[str, IdSequence] = {}

    def register(self, user_id: str, identity: IdSequence) -> None:
        if not user_id or not isinstance(user_id, str):
            raise ProtocolError("user id must be a nonempty string")
        if user_id in self._entries:
            raise ProtocolError(f"user {user_id!r} already registered")
        if self._entries and len(identity) != self.id_length:
            raise ProtocolError(
                f"identity length {len(identity)} != registry length {self.id_length}")
        self._entries[user_id] = identity

    def identity_of(self, user_id: str) -> IdSequence:
        try:
            return self._entries[user_id]
        except KeyError:
            raise UnknownUserError(f"unknown user {user_id!r}") from None

    @property
    def id_length(self) -> Optional[int]:
        for identity in self._entries.values():
            return len(identity)
        return None

    def users(self) -> tuple[str, ...]:
        return tuple(self._entries)

    def __contains__(self, user_id: str) -> bool:
        return user_id in self._entries

    def __len__(self) -> int:
        return len(self._entries)


@dataclass(frozen=True)
class SessionConfig:
    """Sizes, participants, seed and attack descriptor of one session.

    `attack` is either None (honest), a descriptor mapping with a "name" key
    (resolved through the adversary module), or a ready attack-model object.
    """

    n_users: int
    id_length: int
    message_length: int
    channel_checks: int
    swap_checks: int
    seed: int
    initiator: str
    responder: str
    attack: Any = None

    def __post_init__(self):
        if not isinstance(self.n_users, int) or self.n_users < 2:
            raise ConfigError("n_users: must be an integer >= 2")
        if not isinstance(self.id_length, int) or self.id_length < 1:
            raise ConfigError("id_length: must be an integer >= 1")
        for name in ("message_length", "channel_checks", "swap_checks"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 0:
                raise ConfigError(f"{name}: must be an integer >= 0")
        if self.message_length + self.channel_checks + self.swap_checks < 1:
            raise ConfigError(
                "message_length + channel_checks + swap_checks: must be >= 1")
        if not isinstance(self.seed, int):
            raise ConfigError("seed: must be an integer")
        for name in ("initiator", "responder"):
            if not getattr(self, name) or not isinstance(getattr(self, name), str):
                raise ConfigError(f"{name}: must be a nonempty string")
        if self.initiator == self.responder:
            raise ConfigError("initiator: must differ from responder")

    @property
    def total_slots(self) -> int:
        return self.message_length + self.channel_checks + self.swap_checks


class SlotStatus(Enum):
    INTACT = "intact"
    CONSUMED_BY_CHANNEL_CHECK = "consumed_by_channel_check"
    CONSUMED_BY_SWAP_CHECK = "consumed_by_swap_check"
    MESSAGE_CARRIER = "message_carrier"


_ALLOWED_INITS = (BellKind.PHI_PLUS, BellKind.PSI_PLUS)


@dataclass
class PairSlot:
    """Bookkeeping for one communication slot (one pair per user).

    `initiator_init` is the initiator's secret state choice; `trent_kind` is
    the center's full Bell outcome, of which only `trent_class` is announced.
    """

    index: int
    initiator_init: BellKind
    status: SlotStatus = SlotStatus.INTACT
    trent_kind: Optional[BellKind] = None
    trent_class: Optional[BellClass] = None
    initiator_bit: Optional[int] = None
    responder_bit: Optional[int] = None

    def __post_init__(self):
        if self.initiator_init not in _ALLOWED_INITS:
            raise ProtocolError(
                f"initiator pairs start as phi+ or psi+, not {self.initiator_init}")


def infer_partner_bit(initiator_init: BellKind, trent_class: BellClass,
                      own_bit: int) -> int:
    """The responder's Z outcome implied by the swap correlation.

    With the responder's pair fixed to phi+, the two retained qubits end up
    correlated so that

        responder = own XOR (initiator pair was psi+) XOR (announced class psi)

    which covers all eight (initial, class, outcome) combinations.
    """
    if initiator_init not in _ALLOWED_INITS:
        raise ProtocolError(
            f"initiator pairs start as phi+ or psi+, not {initiator_init}")
    if own_bit not in (0, 1):
        raise ProtocolError("own_bit must be 0 or 1")
    return (own_bit
            ^ (initiator_init is BellKind.PSI_PLUS)
            ^ (trent_class is BellClass.PSI)) & 1


@dataclass(frozen=True)
class ForcedOutcomes:
    """Scripted values for walkthroughs: post-selects instead of sampling.

    Forced center kinds and initiator bits apply to the surviving slots in
    order, so scripts are meant for runs without channel checks.
    """

    initiator_inits: Optional[tuple[BellKind, ...]] = None
    trent_kinds: Optional[tuple[BellKind, ...]] = None
    initiator_bits: Optional[tuple[int, ...]] = None


@dataclass
class AuthResult:
    """Outcome of one user's authentication round."""

    user_id: str
    passed: bool
    mismatches: int
    total: int
    announced_bits: tuple[int, ...]
    center_bits: tuple[int, ...]


def authenticate(register: StateRegister, registry: UserRegistry, user_id: str,
                 *, decode_identity: Optional[IdSequence] = None,
                 attack=None, transcript: Optional[Transcript] = None) -> AuthResult:
    """Run the shared-pair authentication round for one user.

    The center encodes each transmitted qubit with a Hadamard iff the
    registered identity bit is 1; the decoding side applies the same rule
    with `decode_identity` (the registered identity if omitted - an
    impersonator passes a guess instead).  The user's announced Z outcomes
    must all match the center's retained-qubit outcomes.
    """
    true_identity = registry.identity_of(user_id)
    if decode_identity is None:
        decode_identity = true_identity
    if len(decode_identity) != len(true_identity):
        raise ProtocolError(
            f"decode identity length {len(decode_identity)} != {len(true_identity)}")
    user_bits = []
    center_bits = []
    for i, encode_bit in enumerate(true_identity.bits):
        center_q, auth_q = register.alloc_bell_pair(BellKind.PHI_PLUS)
        if encode_bit:
            register.apply_hadamard(auth_q)
        if attack is not None:
            attack.on_qubit_in_transit(register, auth_q, ChannelLeg.AUTH, i)
        if decode_identity.bits[i]:
            register.apply_hadamard(auth_q)
        user_bits.append(register.measure_z(auth_q))
        center_bits.append(register.measure_z(center_q))
        register.release(auth_q)
        register.release(center_q)
    mismatches = sum(u != c for u, c in zip(user_bits, center_bits))
    passed = mismatches == 0
    if transcript is not None:
        transcript.append(AuthOutcomes(user_id, tuple(user_bits)))
        transcript.append(AuthVerdict(user_id, passed))
    return AuthResult(user_id, passed, mismatches, len(user_bits),
                      tuple(user_bits), tuple(center_bits))


@dataclass
class ChannelCheckResult:
    initiator_errors: int
    responder_errors: int
    checked: int


class CommunicationPhase:
    """Slot lifecycle driver for the communication phase of one session.

    Slots are physically independent, so each slot's four qubits are created,
    transmitted (running attack hooks), measured and released on demand; the
    register never holds more than one slot at a time while the classical
    protocol steps and announcements keep their usual order.
    """

    def __init__(self, register: StateRegister, initiator: str, responder: str,
                 rng: np.random.Generator, *, attack=None,
                 transcript: Optional[Transcript] = None,
                 forced: Optional[ForcedOutcomes] = None):
        self._register = register
        self._initiator = initiator
        self._responder = responder
        self._rng = rng
        self._attack = attack
        self._transcript = transcript if transcript is not None else Transcript()
        self._forced = forced if forced is not None else ForcedOutcomes()
        self._slots: list[PairSlot] = []
        self._announced = False

    @property
    def slots(self) -> tuple[PairSlot, ...]:
        return tuple(self._slots)

    def _transmit(self, leg: ChannelLeg, qubit, position: int) -> None:
        # Transmission is custody re-tagging plus the attack hook; the
        # simulator models no latency or loss.
        if self._attack is not None:
            self._attack.on_qubit_in_transit(self._register, qubit, leg, position)

    def prepare_pairs(self, count: int) -> tuple[PairSlot, ...]:
        """Draw the initiator's secret state choices and create the slots.

        Qubit allocation and transmission happen per slot when the slot is
        first consumed; the slots record intent and results.
        """
        if count < 1:
            raise ProtocolError("need at least one slot")
        if self._slots:
            raise ProtocolError("pairs already prepared")
        if self._forced.initiator_inits is not None:
            inits = self._forced.initiator_inits
            if len(inits) != count:
                raise ProtocolError(
                    f"forced initiator_inits needs {count} entries, got {len(inits)}")
        else:
            draws = self._rng.integers(0, 2, size=count)
            inits = tuple(BellKind.PSI_PLUS if d else BellKind.PHI_PLUS
                          for d in draws)
        self._slots = [PairSlot(index=i, initiator_init=kind)
                       for i, kind in enumerate(inits)]
        return tuple(self._slots)

    def _alloc_and_transmit(self, slot: PairSlot):
        reg = self._register
        center_a, keep_a = reg.alloc_bell_pair(slot.initiator_init)
        center_b, keep_b = reg.alloc_bell_pair(BellKind.PHI_PLUS)
        self._transmit(ChannelLeg.A_SEQUENCE, center_a, slot.index)
        self._transmit(ChannelLeg.B_SEQUENCE, center_b, slot.index)
        return center_a, keep_a, center_b, keep_b

    def channel_check(self, positions: tuple[int, ...]) -> ChannelCheckResult:
        """Both users verify their own center link at the announced positions.

        The center measures its received qubit of each checked slot in Z and
        announces; each user measures its retained partner and compares
        against the correlation its own initial state implies.  Checked slots
        are consumed and skipped by the swap.
        """
        if self._announced:
            raise ProtocolError("channel check must precede the swap")
        positions = tuple(sorted(positions))
        if len(set(positions)) != len(positions):
            raise ProtocolError("check positions must be distinct")
        if any(p < 0 or p >= len(self._slots) for p in positions):
            raise ProtocolError("check position out of range")
        self._transcript.append(CheckPositions(self._initiator, positions))
        init_errors = 0
        resp_errors = 0
        outcomes_a = []
        outcomes_b = []
        for p in positions:
            slot = self._slots[p]
            if slot.status is not SlotStatus.INTACT:
                raise ProtocolError(f"slot {p} already consumed")
            center_a, keep_a, center_b, keep_b = self._alloc_and_transmit(slot)
            reg = self._register
            center_bit_a = reg.measure_z(center_a)
            slot.initiator_bit = reg.measure_z(keep_a)
            center_bit_b = reg.measure_z(center_b)
            slot.responder_bit = reg.measure_z(keep_b)
            for q in (center_a, keep_a, center_b, keep_b):
                reg.release(q)
            outcomes_a.append((p, center_bit_a))
            outcomes_b.append((p, center_bit_b))
            expect_agree = slot.initiator_init is BellKind.PHI_PLUS
            if (slot.initiator_bit == center_bit_a) != expect_agree:
                init_errors += 1
            if slot.responder_bit != center_bit_b:
                resp_errors += 1
            slot.status = SlotStatus.CONSUMED_BY_CHANNEL_CHECK
        self._transcript.append(CheckOutcomes(self._initiator, tuple(outcomes_a)))
        self._transcript.append(CheckOutcomes(self._responder, tuple(outcomes_b)))
        return ChannelCheckResult(init_errors, resp_errors, len(positions))

    def surviving_slots(self) -> tuple[int, ...]:
        return tuple(s.index for s in self._slots
                     if s.status is not SlotStatus.CONSUMED_BY_CHANNEL_CHECK)

    def swap_and_announce(self) -> SwapAnnouncement:
        """The center Bell-measures each surviving slot crosswise.

        The full Bell outcome is recorded privately per slot; only the
        phi/psi class is announced.  Both users' retained qubits are measured
        in Z as part of the same slot lifecycle (the initiator acts on the
        announcement; the responder's outcomes are used in later steps).
        """
        if not self._slots:
            raise ProtocolError("prepare pairs first")
        if self._announced:
            raise ProtocolError("swap already announced")
        forced_kinds = self._forced.trent_kinds
        forced_bits = self._forced.initiator_bits
        survivors = self.surviving_slots()
        for what, values in (("trent_kinds", forced_kinds),
                             ("initiator_bits", forced_bits)):
            if values is not None and len(values) != len(survivors):
                raise ProtocolError(
                    f"forced {what} needs {len(survivors)} entries, got {len(values)}")
        classes = []
        reg = self._register
        for k, p in enumerate(survivors):
            slot = self._slots[p]
            center_a, keep_a, center_b, keep_b = self._alloc_and_transmit(slot)
            if forced_kinds is not None:
                reg.postselect_bell(center_a, center_b, forced_kinds[k])
                kind = forced_kinds[k]
            else:
                kind = reg.measure_bell(center_a, center_b)
            # collapse the center's leftover pair to a product and drop it
            reg.measure_z(center_a)
            reg.release(center_a)
            reg.release(center_b)
            if forced_bits is not None:
                reg.postselect_z(keep_a, forced_bits[k])
                slot.initiator_bit = forced_bits[k]
            else:
                slot.initiator_bit = reg.measure_z(keep_a)
            slot.responder_bit = reg.measure_z(keep_b)
            reg.release(keep_a)
            reg.release(keep_b)
            slot.trent_kind = kind
            slot.trent_class = kind.bell_class
            classes.append(kind.bell_class)
        self._announced = True
        msg = SwapAnnouncement(tuple(classes))
        self._transcript.append(msg)
        return msg

    def swap_check(self, positions: tuple[int, ...]) -> int:
        """The initiator verifies announced responder outcomes at q positions.

        The responder announces its Z outcomes there; the initiator compares
        them with :func:`infer_partner_bit` applied to its own records.
        Returns the number of mismatches; checked slots are consumed.
        """
        if not self._announced:
            raise ProtocolError("swap check follows the swap announcement")
        positions = tuple(sorted(positions))
        if len(set(positions)) != len(positions):
            raise ProtocolError("swap-check positions must be distinct")
        survivors = set(self.surviving_slots())
        if any(p not in survivors for p in positions):
            raise ProtocolError("swap-check position out of range")
        self._transcript.append(SwapCheckPositions(positions))
        announced = []
        errors = 0
        for p in positions:
            slot = self._slots[p]
            if slot.status is not SlotStatus.INTACT:
                raise ProtocolError(f"slot {p} already consumed")
            announced.append((p, slot.responder_bit))
            expected = infer_partner_bit(slot.initiator_init, slot.trent_class,
                                         slot.initiator_bit)
            if slot.responder_bit != expected:
                errors += 1
            slot.status = SlotStatus.CONSUMED_BY_SWAP_CHECK
        self._transcript.append(SwapCheckOutcomes(tuple(announced)))
        return errors

    def message_slots(self) -> tuple[int, ...]:
        return tuple(s.index for s in self._slots
                     if s.status in (SlotStatus.INTACT, SlotStatus.MESSAGE_CARRIER))

    def encode_and_deliver(self, message: tuple[int, ...]) -> tuple[int, ...]:
        """Transfer the message through the public flip announcement.

        The initiator infers the responder's outcome per remaining slot and
        announces inferred XOR message; the responder flips its own outcomes
        accordingly, which yields exactly the message on honest runs.
        """
        if not self._announced:
            raise ProtocolError("delivery follows the swap announcement")
        carriers = self.message_slots()
        if len(carriers) != len(message):
            raise ProtocolError(
                f"{len(carriers)} message slots for {len(message)} message bits")
        flips = []
        for bit, p in zip(message, carriers):
            slot = self._slots[p]
            inferred = infer_partner_bit(slot.initiator_init, slot.trent_class,
                                         slot.initiator_bit)
            flips.append(bit ^ inferred)
            slot.status = SlotStatus.MESSAGE_CARRIER
        self._transcript.append(FlipAnnouncement(tuple(flips)))
        delivered = tuple(self._slots[p].responder_bit ^ f
                          for p, f in zip(carriers, flips))
        return delivered


@dataclass
class RunReport:
    """Complete outcome record of one session.

    `trent_kinds` (the center's full Bell outcomes per surviving slot) and
    `sent_message` are private-side oracle data for tests and aggregation;
    they are never part of the public transcript.
    """

    auth_passed: dict[str, bool] = field(default_factory=dict)
    auth_mismatches: dict[str, tuple[int, int]] = field(default_factory=dict)
    channel_check_errors: tuple[int, int] = (0, 0)
    channel_check_by_user: dict[str, tuple[int, int]] = field(default_factory=dict)
    swap_check_errors: tuple[int, int] = (0, 0)
    sent_message: Optional[tuple[int, ...]] = None
    delivered_message: Optional[tuple[int, ...]] = None
    aborted_at: Optional[str] = None
    transcript: Transcript = field(default_factory=Transcript)
    trent_kinds: Optional[tuple[BellKind, ...]] = None
    eve_recovered_message: Optional[tuple[int, ...]] = None
    attack_report: Any = None

    @property
    def completed(self) -> bool:
        return self.aborted_at is None


def _resolve_attack(attack: Any):
    """Accept None, a descriptor mapping, or a ready attack-model object."""
    if attack is None:
        return None
    if isinstance(attack, dict):
        from .adversary import build_attack  # local import: higher layer
        return build_attack(attack)
    if hasattr(attack, "on_qubit_in_transit"):
        return attack
    raise ConfigError(f"attack: not a descriptor or attack model: {attack!r}")


def run_session(config: SessionConfig, registry: UserRegistry, *,
                message: Optional[tuple[int, ...]] = None,
                forced: Optional[ForcedOutcomes] = None) -> RunReport:
    """Execute one full session and return its report.

    Authenticates the initiator then the responder (aborting on failure),
    runs the communication phase with its two public checks, and delivers
    the message.  Aborts are recorded in the report, never raised.  A fixed
    config (including seed) reproduces the report bit for bit.
    """
    for user in (config.initiator, config.responder):
        registry.identity_of(user)  # raises UnknownUserError
    if registry.id_length != config.id_length:
        raise ConfigError(
            f"id_length: config says {config.id_length}, "
            f"registry has {registry.id_length}")
    if message is not None:
        if len(message) != config.message_length:
            raise ConfigError(
                f"message_length: message has {len(message)} bits, "
                f"config says {config.message_length}")
        if any(b not in (0, 1) for b in message):
            raise ConfigError("message: bits must be 0 or 1")

    attack = _resolve_attack(config.attack)
    register = StateRegister(derive(config.seed, STREAM_REGISTER))
    rng_initiator = np.random.default_rng(derive(config.seed, STREAM_INITIATOR))
    if attack is not None:
        attack.bind_session(derive(config.seed, STREAM_ATTACK))
    if message is None:
        rng_message = np.random.default_rng(derive(config.seed, STREAM_MESSAGE))
        message = tuple(int(b) for b in
                        rng_message.integers(0, 2, size=config.message_length))

    report = RunReport(sent_message=message)
    transcript = report.transcript
    transcript.append(AuthRequest(config.initiator, config.responder))

    def finalize(aborted_at: Optional[str] = None, reason: Optional[str] = None):
        if aborted_at is not None:
            report.aborted_at = aborted_at
            transcript.append(Abort(reason or aborted_at))
        if attack is not None:
            if report.completed:
                report.eve_recovered_message = attack.reconstruct_message(transcript)
            report.attack_report = attack.build_report(report)
        return report

    # setup/authentication, initiator first
    for user in (config.initiator, config.responder):
        decode = (attack.identity_for_decode(user, config.id_length)
                  if attack is not None else None)
        result = authenticate(register, registry, user,
                              decode_identity=decode, attack=attack,
                              transcript=transcript)
        report.auth_passed[user] = result.passed
        report.auth_mismatches[user] = (result.mismatches, result.total)
        if not result.passed:
            return finalize(f"auth:{user}", f"authentication failed for {user}")

    phase = CommunicationPhase(register, config.initiator, config.responder,
                               rng_initiator, attack=attack,
                               transcript=transcript, forced=forced)
    total = config.total_slots
    phase.prepare_pairs(total)

    n = config.channel_checks
    positions = tuple(sorted(
        int(p) for p in rng_initiator.choice(total, size=n, replace=False)))
    check = phase.channel_check(positions)
    report.channel_check_by_user = {
        config.initiator: (check.initiator_errors, check.checked),
        config.responder: (check.responder_errors, check.checked),
    }
    report.channel_check_errors = (
        check.initiator_errors + check.responder_errors, 2 * check.checked)
    if check.initiator_errors + check.responder_errors > 0:
        return finalize("channel_check", "channel check detected errors")

    survivors = phase.surviving_slots()
    if len(survivors) < config.message_length + config.swap_checks:
        return finalize("prepare", "insufficient surviving pairs")

    phase.swap_and_announce()
    report.trent_kinds = tuple(phase.slots[p].trent_kind for p in survivors)

    q = config.swap_checks
    picked = rng_initiator.choice(len(survivors), size=q, replace=False)
    swap_positions = tuple(sorted(survivors[int(i)] for i in picked))
    errors = phase.swap_check(swap_positions)
    report.swap_check_errors = (errors, q)
    if errors > 0:
        return finalize("swap_check", "swap check detected errors")

    report.delivered_message = phase.encode_and_deliver(message)
    return finalize()
