"""Classical-channel messages and the ordered public transcript.

Every announcement a party makes during a session is one of the tagged
message types below, appended in protocol order to a :class:`Transcript`.
The transcript is the complete public view of a session: eavesdropper models
and replay tooling read it, and reports serialize it.  Secret material
(identity bits, the initiator's Bell-state choices, unannounced measurement
results) never appears in any message; that property is asserted by tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from typing import ClassVar

from .quantum import BellClass


def _check_bits(bits, what: str) -> None:
    if any(b not in (0, 1) for b in bits):
        raise ValueError(f"{what} must contain only 0/1 bits")


def _check_positions(positions) -> None:
    if any(p < 0 for p in positions):
        raise ValueError("positions must be nonnegative")
    if any(a >= b for a, b in zip(positions, positions[1:])):
        raise ValueError("positions must be strictly increasing")


@dataclass(frozen=True)
class AuthRequest:
    """A user asks the center to set up a session with a partner."""

    TAG: ClassVar[str] = "auth_request"
    initiator: str
    responder: str


@dataclass(frozen=True)
class AuthOutcomes:
    """A user's announced Z outcomes of its decoded authentication sequence."""

    TAG: ClassVar[str] = "auth_outcomes"
    user_id: str
    bits: tuple[int, ...]

    def __post_init__(self):
        _check_bits(self.bits, "auth outcomes")


@dataclass(frozen=True)
class AuthVerdict:
    """The center's pass/fail verdict for one user's authentication."""

    TAG: ClassVar[str] = "auth_verdict"
    user_id: str
    passed: bool


@dataclass(frozen=True)
class CheckPositions:
    """Announced channel-check positions (shared by both users' checks)."""

    TAG: ClassVar[str] = "check_positions"
    chooser: str
    positions: tuple[int, ...]

    def __post_init__(self):
        _check_positions(self.positions)


@dataclass(frozen=True)
class CheckOutcomes:
    """The center's announced Z outcomes serving one user's channel check."""

    TAG: ClassVar[str] = "check_outcomes"
    user_id: str
    outcomes: tuple[tuple[int, int], ...]  # (position, bit), ascending

    def __post_init__(self):
        _check_positions(tuple(p for p, _ in self.outcomes))
        _check_bits(tuple(b for _, b in self.outcomes), "check outcomes")


@dataclass(frozen=True)
class SwapAnnouncement:
    """The center's phi/psi classification per surviving slot, in slot order."""

    TAG: ClassVar[str] = "swap_announcement"
    classes: tuple[BellClass, ...]


@dataclass(frozen=True)
class SwapCheckPositions:
    """Initiator-announced positions used to verify the swap correlations."""

    TAG: ClassVar[str] = "swap_check_positions"
    positions: tuple[int, ...]

    def __post_init__(self):
        _check_positions(self.positions)


@dataclass(frozen=True)
class SwapCheckOutcomes:
    """Responder's announced Z outcomes at the swap-check positions."""

    TAG: ClassVar[str] = "swap_check_outcomes"
    outcomes: tuple[tuple[int, int], ...]  # (position, bit), ascending

    def __post_init__(self):
        _check_positions(tuple(p for p, _ in self.outcomes))
        _check_bits(tuple(b for _, b in self.outcomes), "swap-check outcomes")


@dataclass(frozen=True)
class FlipAnnouncement:
    """Initiator's public flip string: responder flips where a bit is 1."""

    TAG: ClassVar[str] = "flip_announcement"
    bits: tuple[int, ...]

    def __post_init__(self):
        _check_bits(self.bits, "flip announcement")


@dataclass(frozen=True)
class Abort:
    """Public abort with a reason; terminates the session."""

    TAG: ClassVar[str] = "abort"
    reason: str


MESSAGE_TYPES = (
    AuthRequest, AuthOutcomes, AuthVerdict, CheckPositions, CheckOutcomes,
    SwapAnnouncement, SwapCheckPositions, SwapCheckOutcomes, FlipAnnouncement,
    Abort,
)

_BY_TAG = {cls.TAG: cls for cls in MESSAGE_TYPES}


def message_to_dict(msg) -> dict:
    """Tagged JSON-ready dict with explicit field names."""
    out: dict = {"type": msg.TAG}
    for f in fields(msg):
        value = getattr(msg, f.name)
        if isinstance(value, tuple):
            value = [list(v) if isinstance(v, tuple) else
                     (v.value if isinstance(v, BellClass) else v)
                     for v in value]
        elif isinstance(value, BellClass):
            value = value.value
        out[f.name] = value
    return out


def message_from_dict(data: dict):
    """Inverse of :func:`message_to_dict`; raises ValueError on unknown tags."""
    data = dict(data)
    tag = data.pop("type", None)
    cls = _BY_TAG.get(tag)
    if cls is None:
        raise ValueError(f"unknown message type {tag!r}")
    kwargs = {}
    for f in fields(cls):
        value = data[f.name]
        if f.name == "classes":
            value = tuple(BellClass(v) for v in value)
        elif f.name in ("bits", "positions"):
            value = tuple(int(v) for v in value)
        elif f.name == "outcomes":
            value = tuple((int(p), int(b)) for p, b in value)
        kwargs[f.name] = value
    return cls(**kwargs)


class Transcript:
    """Ordered public record of every classical message in one session."""

    def __init__(self, messages=()):
        self._messages: list = list(messages)

    def append(self, msg) -> None:
        if not isinstance(msg, MESSAGE_TYPES):
            raise TypeError(f"not a classical message: {msg!r}")
        self._messages.append(msg)

    @property
    def messages(self) -> tuple:
        return tuple(self._messages)

    def first(self, cls):
        """First message of the given type, or None."""
        for msg in self._messages:
            if isinstance(msg, cls):
                return msg
        return None

    def all_of(self, cls) -> list:
        return [m for m in self._messages if isinstance(m, cls)]

    def to_jsonable(self) -> list[dict]:
        return [message_to_dict(m) for m in self._messages]

    def to_json(self, indent=None) -> str:
        return json.dumps(self.to_jsonable(), sort_keys=True, indent=indent)

    @classmethod
    def from_jsonable(cls, items) -> "Transcript":
        return cls(message_from_dict(d) for d in items)

    def __len__(self) -> int:
        return len(self._messages)

    def __iter__(self):
        return iter(self._messages)

    def __eq__(self, other) -> bool:
        return isinstance(other, Transcript) and self._messages == other._messages

    def __repr__(self) -> str:
        return f"Transcript({len(self._messages)} messages)"
