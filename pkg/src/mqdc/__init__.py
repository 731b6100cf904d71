"""Deterministic simulator of an authenticated multiuser quantum direct
communication protocol built on entanglement swapping.

The package provides an exact few-qubit state-vector backend
(:mod:`mqdc.quantum`), the party state machines and session orchestration
(:mod:`mqdc.protocol`), pluggable eavesdropper models (:mod:`mqdc.adversary`),
and a batch experiment harness with a CLI (:mod:`mqdc.harness`,
:mod:`mqdc.cli`).
"""

from .quantum import (
    BellClass,
    BellKind,
    QubitRef,
    StateRegister,
    SwapOutcomeClass,
    new_register,
    swap_table,
)

__version__ = "0.1.0"

from .messages import Transcript  # noqa: E402
from .protocol import (  # noqa: E402
    ChannelLeg,
    ConfigError,
    ForcedOutcomes,
    IdSequence,
    RunReport,
    SessionConfig,
    UserRegistry,
    infer_partner_bit,
    run_session,
)

__all__ = [
    "BellClass",
    "BellKind",
    "ChannelLeg",
    "ConfigError",
    "ForcedOutcomes",
    "IdSequence",
    "QubitRef",
    "RunReport",
    "SessionConfig",
    "StateRegister",
    "SwapOutcomeClass",
    "Transcript",
    "UserRegistry",
    "infer_partner_bit",
    "new_register",
    "run_session",
    "swap_table",
    "__version__",
]
