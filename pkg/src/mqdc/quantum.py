"""Exact state-vector backend for the few-qubit quantum mechanics of the protocol.

A :class:`StateRegister` holds the joint complex-amplitude state of all live
qubits belonging to one protocol session.  Qubits are created in Bell pairs,
manipulated with Hadamard gates, consumed by computational-basis (sigma_z) or
Bell-basis measurements, and released once they are unentangled so the register
dimension stays small.  All measurement randomness comes from the register's
own seeded PCG64 stream: a fixed seed plus a fixed operation sequence
reproduces every outcome bit for bit.

Fixed conventions (the swap-outcome bookkeeping depends on them):

- Basis-index bit k corresponds to qubit slot k, most significant bit first:
  slot 0 is the highest-order bit of the amplitude index.
- A Bell measurement of the ordered qubit pair (q1, q2) indexes the Bell basis
  with q1 as the first qubit.  Sampling walks the four projectors in the fixed
  order phi+, phi-, psi+, psi- against a single uniform draw.
- States are renormalized after every collapse; the squared norm is checked to
  stay within 1e-10 of 1 after every operation.

The implementation favors few numpy calls per operation: protocol sessions run
hundreds of thousands of operations on dimension-4..64 states, where per-call
overhead, not arithmetic, is the cost.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from math import sqrt

import numpy as np

MAX_LIVE_QUBITS = 24

NORM_TOL = 1e-10          # allowed drift of the squared norm
ALGEBRA_TOL = 1e-12       # tolerance for exact algebraic identities
_ZERO_TOL = 1e-12         # probability treated as impossible
_ENTANGLE_TOL = 1e-9      # Cauchy-Schwarz defect allowed when releasing

_INV_SQRT2 = 1.0 / sqrt(2.0)

_REGISTER_IDS = itertools.count()


class QuantumError(Exception):
    """Base error for state-register misuse or internal invariant drift."""


class InvalidQubitError(QuantumError):
    """A qubit reference is dead, foreign to the register, or duplicated."""


class RegisterCapacityError(QuantumError):
    """Allocating would exceed the register's live-qubit cap."""


class EntangledQubitError(QuantumError):
    """Attempted to release a qubit still entangled with the rest."""


class ImpossibleOutcomeError(QuantumError):
    """Post-selection onto an outcome of (numerically) zero probability."""


class BellClass(Enum):
    """Coarse two-way classification of Bell states: phi-like vs psi-like."""

    PHI = "phi"
    PSI = "psi"


class BellKind(Enum):
    """The four maximally entangled two-qubit states."""

    PHI_PLUS = "phi+"    # (|00> + |11>)/sqrt(2)
    PHI_MINUS = "phi-"   # (|00> - |11>)/sqrt(2)
    PSI_PLUS = "psi+"    # (|01> + |10>)/sqrt(2)
    PSI_MINUS = "psi-"   # (|01> - |10>)/sqrt(2)

    @property
    def bell_class(self) -> BellClass:
        if self in (BellKind.PHI_PLUS, BellKind.PHI_MINUS):
            return BellClass.PHI
        return BellClass.PSI

    @property
    def sign(self) -> int:
        """+1 for the plus states, -1 for the minus states."""
        return 1 if self in (BellKind.PHI_PLUS, BellKind.PSI_PLUS) else -1


# Fixed sampling order for Bell measurements.
BELL_ORDER = (BellKind.PHI_PLUS, BellKind.PHI_MINUS,
              BellKind.PSI_PLUS, BellKind.PSI_MINUS)

BELL_VECTORS = {
    BellKind.PHI_PLUS: np.array([_INV_SQRT2, 0.0, 0.0, _INV_SQRT2], dtype=np.complex128),
    BellKind.PHI_MINUS: np.array([_INV_SQRT2, 0.0, 0.0, -_INV_SQRT2], dtype=np.complex128),
    BellKind.PSI_PLUS: np.array([0.0, _INV_SQRT2, _INV_SQRT2, 0.0], dtype=np.complex128),
    BellKind.PSI_MINUS: np.array([0.0, _INV_SQRT2, -_INV_SQRT2, 0.0], dtype=np.complex128),
}


class SwapOutcomeClass(Enum):
    """Joint-outcome classes of the double Bell measurement after swapping.

    Each class names the set of four ordered (first, second) Bell-outcome
    pairs that can occur, each with probability 1/4, when two Bell pairs are
    measured crosswise.  "ID" classes pair identical state letters, "Rev"
    classes pair opposite letters; "++" keeps the relative sign, "+-" flips it.
    """

    ID_PLUS_PLUS = "id++"
    ID_PLUS_MINUS = "id+-"
    REV_PLUS_PLUS = "rev++"
    REV_PLUS_MINUS = "rev+-"

    def pairs(self) -> frozenset[tuple[BellKind, BellKind]]:
        """The four ordered Bell-outcome pairs this class expands to."""
        return _EXPANSIONS[self]


_K = BellKind
_EXPANSIONS = {
    SwapOutcomeClass.ID_PLUS_PLUS: frozenset({
        (_K.PHI_PLUS, _K.PHI_PLUS), (_K.PHI_MINUS, _K.PHI_MINUS),
        (_K.PSI_PLUS, _K.PSI_PLUS), (_K.PSI_MINUS, _K.PSI_MINUS),
    }),
    SwapOutcomeClass.ID_PLUS_MINUS: frozenset({
        (_K.PSI_PLUS, _K.PSI_MINUS), (_K.PHI_MINUS, _K.PHI_PLUS),
        (_K.PHI_PLUS, _K.PHI_MINUS), (_K.PSI_MINUS, _K.PSI_PLUS),
    }),
    SwapOutcomeClass.REV_PLUS_PLUS: frozenset({
        (_K.PHI_PLUS, _K.PSI_PLUS), (_K.PHI_MINUS, _K.PSI_MINUS),
        (_K.PSI_PLUS, _K.PHI_PLUS), (_K.PSI_MINUS, _K.PHI_MINUS),
    }),
    SwapOutcomeClass.REV_PLUS_MINUS: frozenset({
        (_K.PHI_PLUS, _K.PSI_MINUS), (_K.PHI_MINUS, _K.PSI_PLUS),
        (_K.PSI_PLUS, _K.PHI_MINUS), (_K.PSI_MINUS, _K.PHI_PLUS),
    }),
}

# Outcome class of measuring pairs (1,3) and (2,4) crosswise out of the
# product state pair12 (x) pair34, for every ordered combination of initial
# Bell states.  Rows: pair12 kind; columns: pair34 kind.
_SWAP_TABLE = {
    (_K.PHI_PLUS, _K.PHI_PLUS): SwapOutcomeClass.ID_PLUS_PLUS,
    (_K.PHI_PLUS, _K.PHI_MINUS): SwapOutcomeClass.ID_PLUS_MINUS,
    (_K.PHI_PLUS, _K.PSI_PLUS): SwapOutcomeClass.REV_PLUS_PLUS,
    (_K.PHI_PLUS, _K.PSI_MINUS): SwapOutcomeClass.REV_PLUS_MINUS,
    (_K.PHI_MINUS, _K.PHI_PLUS): SwapOutcomeClass.ID_PLUS_MINUS,
    (_K.PHI_MINUS, _K.PHI_MINUS): SwapOutcomeClass.ID_PLUS_PLUS,
    (_K.PHI_MINUS, _K.PSI_PLUS): SwapOutcomeClass.REV_PLUS_MINUS,
    (_K.PHI_MINUS, _K.PSI_MINUS): SwapOutcomeClass.REV_PLUS_PLUS,
    (_K.PSI_PLUS, _K.PHI_PLUS): SwapOutcomeClass.REV_PLUS_PLUS,
    (_K.PSI_PLUS, _K.PHI_MINUS): SwapOutcomeClass.REV_PLUS_MINUS,
    (_K.PSI_PLUS, _K.PSI_PLUS): SwapOutcomeClass.ID_PLUS_PLUS,
    (_K.PSI_PLUS, _K.PSI_MINUS): SwapOutcomeClass.ID_PLUS_MINUS,
    (_K.PSI_MINUS, _K.PHI_PLUS): SwapOutcomeClass.REV_PLUS_MINUS,
    (_K.PSI_MINUS, _K.PHI_MINUS): SwapOutcomeClass.REV_PLUS_PLUS,
    (_K.PSI_MINUS, _K.PSI_PLUS): SwapOutcomeClass.ID_PLUS_MINUS,
    (_K.PSI_MINUS, _K.PSI_MINUS): SwapOutcomeClass.ID_PLUS_PLUS,
}
del _K


def swap_table(first: BellKind, second: BellKind) -> SwapOutcomeClass:
    """Swap-outcome class for initial pairs `first` (1,2) and `second` (3,4)."""
    return _SWAP_TABLE[(first, second)]


@dataclass(frozen=True)
class QubitRef:
    """Stable handle to one live qubit slot of one register.

    `index` is a per-register allocation counter, not the current axis
    position; it stays valid until the qubit is released.
    """

    register_id: int
    index: int


def _norm2(vec: np.ndarray) -> float:
    return float(np.vdot(vec, vec).real)


class StateRegister:
    """Mutable joint state of the live qubits of one session.

    Single-owner object: callers serialize all operations on one register.
    Distinct registers are fully independent, including their random streams.
    """

    def __init__(self, seed: int):
        self._id = next(_REGISTER_IDS)
        self._rng = np.random.default_rng(seed & ((1 << 64) - 1))
        self._amps = np.ones(1, dtype=np.complex128)
        self._order: list[int] = []      # handle ids in axis order (slot 0 first)
        self._axis: dict[int, int] = {}  # handle id -> axis position
        self._next_handle = 0

    @property
    def register_id(self) -> int:
        return self._id

    @property
    def live_count(self) -> int:
        return len(self._order)

    @property
    def amplitudes(self) -> np.ndarray:
        """Copy of the amplitude vector over the live-qubit basis."""
        return self._amps.copy()

    def norm_squared(self) -> float:
        return _norm2(self._amps)

    # -- internal helpers ---------------------------------------------------

    def _check_norm(self) -> None:
        n2 = _norm2(self._amps)
        if abs(n2 - 1.0) > NORM_TOL:
            raise QuantumError(f"normalization drifted: |amps|^2 = {n2!r}")

    def _axis_of(self, q: QubitRef) -> int:
        if not isinstance(q, QubitRef) or q.register_id != self._id:
            raise InvalidQubitError(f"{q!r} does not belong to this register")
        axis = self._axis.get(q.index)
        if axis is None:
            raise InvalidQubitError(f"{q!r} refers to a released qubit")
        return axis

    def _split_view(self, axis: int) -> np.ndarray:
        """View of the amplitudes as (pre, 2, post) split at `axis`."""
        return self._amps.reshape(1 << axis, 2, -1)

    def _pair_rows(self, q1: QubitRef, q2: QubitRef):
        """Amplitudes as a (4, rest) matrix, rows indexed by (bit q1, bit q2)."""
        if q1.register_id == q2.register_id and q1.index == q2.index:
            raise InvalidQubitError("need two distinct qubits")
        a1 = self._axis_of(q1)
        a2 = self._axis_of(q2)
        t = self._amps.reshape([2] * self.live_count)
        t = np.moveaxis(t, (a1, a2), (0, 1))
        return t.reshape(4, -1), a1, a2

    def _set_from_pair_rows(self, mat: np.ndarray, a1: int, a2: int) -> None:
        t = mat.reshape([2, 2] + [2] * (self.live_count - 2))
        t = np.moveaxis(t, (0, 1), (a1, a2))
        self._amps = np.ascontiguousarray(t).reshape(-1)

    # -- operations ---------------------------------------------------------

    def alloc_bell_pair(self, kind: BellKind) -> tuple[QubitRef, QubitRef]:
        """Append two fresh qubits prepared exactly in the Bell state `kind`.

        The existing joint state is unchanged (tensor extension); the first
        returned qubit is the more significant of the two new slots.
        """
        if self.live_count + 2 > MAX_LIVE_QUBITS:
            raise RegisterCapacityError(
                f"register cap is {MAX_LIVE_QUBITS} live qubits")
        bell = BELL_VECTORS[kind]
        amps = self._amps
        if amps.size == 1:
            self._amps = bell * amps[0]
        else:
            self._amps = (amps[:, None] * bell).reshape(-1)
        h1 = self._next_handle
        h2 = h1 + 1
        self._next_handle = h1 + 2
        pos = len(self._order)
        self._axis[h1] = pos
        self._axis[h2] = pos + 1
        self._order.append(h1)
        self._order.append(h2)
        self._check_norm()
        return QubitRef(self._id, h1), QubitRef(self._id, h2)

    def apply_hadamard(self, q: QubitRef) -> None:
        """Apply the Hadamard gate to one qubit."""
        view = self._split_view(self._axis_of(q))
        v0 = view[:, 0, :]
        v1 = view[:, 1, :]
        s = (v0 + v1) * _INV_SQRT2
        view[:, 1, :] = (v0 - v1) * _INV_SQRT2
        view[:, 0, :] = s
        self._check_norm()

    def _collapse_z(self, axis: int, outcome: int, p: float) -> None:
        view = self._split_view(axis)
        view[:, 1 - outcome, :] = 0.0
        self._amps *= 1.0 / sqrt(p)
        self._check_norm()

    def measure_z(self, q: QubitRef) -> int:
        """Measure one qubit in the computational basis and collapse.

        The outcome is Born-rule sampled from the register stream; the qubit
        stays live in the collapsed, renormalized state.
        """
        axis = self._axis_of(q)
        view = self._split_view(axis)
        v0 = view[:, 0, :]
        p0 = float(np.vdot(v0, v0).real)
        p1 = max(0.0, 1.0 - p0)
        outcome = 0 if self._rng.random() < p0 else 1
        p = p0 if outcome == 0 else p1
        if p <= _ZERO_TOL:
            outcome = 1 - outcome
            p = p0 if outcome == 0 else p1
        self._collapse_z(axis, outcome, p)
        return outcome

    def postselect_z(self, q: QubitRef, bit: int) -> None:
        """Collapse one qubit onto a chosen computational-basis outcome.

        Demo/test plumbing: consumes no randomness and errors out if the
        requested outcome has (numerically) zero probability.
        """
        if bit not in (0, 1):
            raise ValueError("bit must be 0 or 1")
        axis = self._axis_of(q)
        view = self._split_view(axis)
        vb = view[:, bit, :]
        p = float(np.vdot(vb, vb).real)
        if p < _ZERO_TOL:
            raise ImpossibleOutcomeError(f"outcome {bit} has probability {p!r}")
        self._collapse_z(axis, bit, p)

    def _bell_components(self, q1: QubitRef, q2: QubitRef):
        mat, a1, a2 = self._pair_rows(q1, q2)
        r00, r01, r10, r11 = mat
        comps = {
            BellKind.PHI_PLUS: (r00 + r11) * _INV_SQRT2,
            BellKind.PHI_MINUS: (r00 - r11) * _INV_SQRT2,
            BellKind.PSI_PLUS: (r01 + r10) * _INV_SQRT2,
            BellKind.PSI_MINUS: (r01 - r10) * _INV_SQRT2,
        }
        probs = {kind: _norm2(c) for kind, c in comps.items()}
        total = sum(probs.values())
        if abs(total - 1.0) > NORM_TOL:
            raise QuantumError(f"Bell probabilities sum to {total!r}")
        return a1, a2, comps, probs

    def bell_projection_probabilities(self, q1: QubitRef, q2: QubitRef) -> dict[BellKind, float]:
        """Born-rule probabilities of a Bell measurement on (q1, q2), no collapse."""
        _, _, _, probs = self._bell_components(q1, q2)
        return probs

    def _collapse_bell(self, a1: int, a2: int, comps, probs, kind: BellKind) -> None:
        c = comps[kind] * (1.0 / sqrt(probs[kind]))
        mat = np.zeros((4, c.size), dtype=np.complex128)
        if kind is BellKind.PHI_PLUS:
            mat[0] = c * _INV_SQRT2
            mat[3] = c * _INV_SQRT2
        elif kind is BellKind.PHI_MINUS:
            mat[0] = c * _INV_SQRT2
            mat[3] = c * -_INV_SQRT2
        elif kind is BellKind.PSI_PLUS:
            mat[1] = c * _INV_SQRT2
            mat[2] = c * _INV_SQRT2
        else:
            mat[1] = c * _INV_SQRT2
            mat[2] = c * -_INV_SQRT2
        self._set_from_pair_rows(mat, a1, a2)
        self._check_norm()

    def measure_bell(self, q1: QubitRef, q2: QubitRef) -> BellKind:
        """Project the ordered pair (q1, q2) onto one of the four Bell states.

        Sampled with a single uniform draw walked against the cumulative
        probabilities in the fixed order phi+, phi-, psi+, psi-.
        """
        a1, a2, comps, probs = self._bell_components(q1, q2)
        u = self._rng.random()
        acc = 0.0
        chosen = None
        for kind in BELL_ORDER:
            p = probs[kind]
            if p <= 0.0:
                continue
            acc += p
            chosen = kind
            if u < acc:
                break
        if chosen is None:
            raise QuantumError("no Bell outcome has positive probability")
        self._collapse_bell(a1, a2, comps, probs, chosen)
        return chosen

    def postselect_bell(self, q1: QubitRef, q2: QubitRef, kind: BellKind) -> None:
        """Collapse (q1, q2) onto a chosen Bell outcome (demo/test plumbing)."""
        a1, a2, comps, probs = self._bell_components(q1, q2)
        if probs[kind] < _ZERO_TOL:
            raise ImpossibleOutcomeError(
                f"{kind.value} has probability {probs[kind]!r}")
        self._collapse_bell(a1, a2, comps, probs, kind)

    def release(self, q: QubitRef) -> None:
        """Remove an unentangled qubit slot and renormalize the remainder.

        The qubit must be in a product state with the rest of the register
        (which is always the case right after it was measured).
        """
        axis = self._axis_of(q)
        view = self._split_view(axis)
        r0 = view[:, 0, :]
        r1 = view[:, 1, :]
        p0 = float(np.vdot(r0, r0).real)
        p1 = float(np.vdot(r1, r1).real)
        if p1 < _ZERO_TOL:
            rest, p = r0, p0
        elif p0 < _ZERO_TOL:
            rest, p = r1, p1
        else:
            # Product state iff the two rows are parallel (Cauchy-Schwarz
            # equality); a measured qubit always has one row exactly zero.
            defect = p0 * p1 - abs(complex(np.vdot(r0, r1))) ** 2
            if defect > _ENTANGLE_TOL:
                raise EntangledQubitError(
                    f"{q!r} is still entangled (defect {defect!r})")
            rest, p = (r0, p0) if p0 >= p1 else (r1, p1)
        self._amps = np.ascontiguousarray(rest).reshape(-1) * (1.0 / sqrt(p))
        del self._axis[q.index]
        self._order.pop(axis)
        for h, pos in self._axis.items():
            if pos > axis:
                self._axis[h] = pos - 1
        self._check_norm()


def new_register(seed: int) -> StateRegister:
    """Create an empty register with a deterministic stream derived from `seed`."""
    return StateRegister(seed)
