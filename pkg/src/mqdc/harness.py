"""Batch experiment runner: configs in, deterministic reports out.

An experiment is a base session configuration plus a list of attack
scenarios and a trial count.  Every trial runs with its own derived seed
(see :mod:`mqdc.seeding`), so the report file is a pure function of the
config bytes and the tool version; wall-clock timing is kept out of the
file and printed separately.  Rates are serialized as shortest-round-trip
decimal strings alongside their integer numerator/denominator counts, so
every number in a report is exactly recomputable and byte-stable.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .adversary import build_attack
from .messages import FlipAnnouncement, Transcript
from .protocol import (
    ConfigError,
    ForcedOutcomes,
    IdSequence,
    RunReport,
    SessionConfig,
    UserRegistry,
    run_session,
)
from .quantum import BellKind
from .seeding import STREAM_REGISTRY, derive, trial_seed

OUT_DIR_ENV = "MQDC_OUT_DIR"
SCHEMA_VERSION = "1"


@dataclass(frozen=True)
class ExperimentSpec:
    """Validated experiment description: base session, scenarios, output."""

    base: SessionConfig
    trials: int
    scenarios: tuple[dict, ...]
    output_path: str = "report.json"
    emit_transcripts: bool = False

    def __post_init__(self):
        if not isinstance(self.trials, int) or self.trials < 1:
            raise ConfigError("trials: must be an integer >= 1")
        if not self.scenarios:
            raise ConfigError("scenarios: must list at least one scenario")


@dataclass
class AggregateStats:
    """Per-scenario aggregates over all trials."""

    scenario: str
    descriptor: dict
    trials: int
    auth_pass_count: int = 0
    channel_check_errors: int = 0
    channel_check_total: int = 0
    swap_check_errors: int = 0
    swap_check_total: int = 0
    aborts_by_step: dict[str, int] = field(default_factory=dict)
    exact_deliveries: int = 0
    eve_recoveries: int = 0
    duration_seconds: float = 0.0
    transcripts: Optional[list[list[dict]]] = None

    @property
    def auth_pass_rate(self) -> float:
        return self.auth_pass_count / self.trials

    @property
    def channel_check_error_rate(self) -> float:
        if self.channel_check_total == 0:
            return 0.0
        return self.channel_check_errors / self.channel_check_total

    @property
    def swap_check_error_rate(self) -> float:
        if self.swap_check_total == 0:
            return 0.0
        return self.swap_check_errors / self.swap_check_total

    @property
    def abort_rate_by_step(self) -> dict[str, float]:
        return {step: count / self.trials
                for step, count in sorted(self.aborts_by_step.items())}

    @property
    def message_fidelity(self) -> float:
        return self.exact_deliveries / self.trials

    @property
    def eve_recovery_rate(self) -> float:
        return self.eve_recoveries / self.trials


_SESSION_KEYS = {
    "n_users": (int, "must be an integer"),
    "id_length": (int, "must be an integer"),
    "message_length": (int, "must be an integer"),
    "channel_checks": (int, "must be an integer"),
    "swap_checks": (int, "must be an integer"),
    "seed": (int, "must be an integer"),
    "initiator": (str, "must be a string"),
    "responder": (str, "must be a string"),
}
_REQUIRED = set(_SESSION_KEYS) - {"n_users"} | {"trials", "scenarios"}
_OPTIONAL = {"n_users", "output_path", "emit_transcripts"}


def _type_check(key: str, value, expected, message: str):
    if not isinstance(value, expected) or isinstance(value, bool):
        raise ConfigError(f"{key}: {message}, got {value!r}")
    return value


def parse_config(data: dict) -> ExperimentSpec:
    """Validate a parsed configuration tree into an ExperimentSpec."""
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be an object")
    unknown = set(data) - set(_SESSION_KEYS) - _REQUIRED - _OPTIONAL
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown key")
    missing = _REQUIRED - set(data)
    if missing:
        raise ConfigError(f"{sorted(missing)[0]}: required key missing")

    session_kwargs = {}
    for key, (expected, message) in _SESSION_KEYS.items():
        if key == "n_users" and key not in data:
            session_kwargs[key] = 2
            continue
        value = data[key]
        if expected is str:
            if not isinstance(value, str):
                raise ConfigError(f"{key}: {message}, got {value!r}")
        else:
            _type_check(key, value, expected, message)
        session_kwargs[key] = value
    base = SessionConfig(attack=None, **session_kwargs)

    trials = _type_check("trials", data["trials"], int, "must be an integer")
    scenarios_raw = data["scenarios"]
    if not isinstance(scenarios_raw, list):
        raise ConfigError("scenarios: must be a list")
    scenarios = []
    for i, descriptor in enumerate(scenarios_raw):
        try:
            attack = build_attack(descriptor)
        except ConfigError as exc:
            raise ConfigError(f"scenarios[{i}].{exc}") from None
        if attack.name == "impersonate":
            target = descriptor["target"]
            if target not in (base.initiator, base.responder):
                raise ConfigError(
                    f"scenarios[{i}].target: {target!r} is not a session participant")
        scenarios.append(dict(descriptor))

    output_path = data.get("output_path", "report.json")
    if not isinstance(output_path, str) or not output_path:
        raise ConfigError("output_path: must be a nonempty string")
    emit_transcripts = data.get("emit_transcripts", False)
    if not isinstance(emit_transcripts, bool):
        raise ConfigError("emit_transcripts: must be true or false")
    return ExperimentSpec(base=base, trials=trials, scenarios=tuple(scenarios),
                          output_path=output_path,
                          emit_transcripts=emit_transcripts)


def load_config(path) -> ExperimentSpec:
    """Load and validate an experiment config from a JSON file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return parse_config(data)


def build_registry(spec: ExperimentSpec) -> UserRegistry:
    """Registry with the two participants plus fillers up to n_users.

    Identities are drawn from the registry substream of the base seed, so
    the whole experiment remains a function of the config.
    """
    rng = np.random.default_rng(derive(spec.base.seed, STREAM_REGISTRY))
    registry = UserRegistry()
    names = [spec.base.initiator, spec.base.responder]
    k = 2
    while len(names) < spec.base.n_users:
        candidate = f"user{k}"
        if candidate not in names:
            names.append(candidate)
        k += 1
    for name in names:
        registry.register(name, IdSequence.random(spec.base.id_length, rng))
    return registry


def run_experiment(spec: ExperimentSpec, *, out_path=None,
                   registry: Optional[UserRegistry] = None) -> list[AggregateStats]:
    """Run trials x scenarios sessions, write the report, return the stats.

    Protocol aborts are data, not failures; only I/O problems raise.
    """
    if registry is None:
        registry = build_registry(spec)
    results = []
    for s_idx, descriptor in enumerate(spec.scenarios):
        stats = AggregateStats(
            scenario=descriptor["name"], descriptor=dict(descriptor),
            trials=spec.trials,
            transcripts=[] if spec.emit_transcripts else None)
        started = time.perf_counter()
        for t_idx in range(spec.trials):
            config = replace(spec.base,
                             seed=trial_seed(spec.base.seed, s_idx, t_idx),
                             attack=descriptor)
            report = run_session(config, registry)
            _accumulate(stats, report)
            if stats.transcripts is not None:
                stats.transcripts.append(report.transcript.to_jsonable())
        stats.duration_seconds = time.perf_counter() - started
        results.append(stats)
    emit_report(results, spec, _resolve_out_path(spec, out_path))
    return results


def _accumulate(stats: AggregateStats, report: RunReport) -> None:
    if report.auth_passed and all(report.auth_passed.values()):
        stats.auth_pass_count += 1
    stats.channel_check_errors += report.channel_check_errors[0]
    stats.channel_check_total += report.channel_check_errors[1]
    stats.swap_check_errors += report.swap_check_errors[0]
    stats.swap_check_total += report.swap_check_errors[1]
    if report.aborted_at is not None:
        stats.aborts_by_step[report.aborted_at] = (
            stats.aborts_by_step.get(report.aborted_at, 0) + 1)
    if (report.delivered_message is not None
            and report.delivered_message == report.sent_message):
        stats.exact_deliveries += 1
    if (report.eve_recovered_message is not None
            and report.eve_recovered_message == report.sent_message):
        stats.eve_recoveries += 1


def _resolve_out_path(spec: ExperimentSpec, out_path) -> Path:
    path = Path(out_path) if out_path is not None else Path(spec.output_path)
    if not path.is_absolute():
        base = os.environ.get(OUT_DIR_ENV)
        if base:
            path = Path(base) / path
    return path


def _rate(value: float) -> str:
    return repr(float(value))


def report_document(results: list[AggregateStats], spec: ExperimentSpec) -> dict:
    """The JSON report tree; deterministic given (spec, results)."""
    base = spec.base
    doc = {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "mqdc", "version": __version__},
        "experiment": {
            "n_users": base.n_users,
            "id_length": base.id_length,
            "message_length": base.message_length,
            "channel_checks": base.channel_checks,
            "swap_checks": base.swap_checks,
            "seed": base.seed,
            "initiator": base.initiator,
            "responder": base.responder,
            "trials": spec.trials,
            "emit_transcripts": spec.emit_transcripts,
            "scenarios": [dict(d) for d in spec.scenarios],
        },
        "results": [],
    }
    for stats in results:
        entry = {
            "scenario": stats.scenario,
            "descriptor": dict(stats.descriptor),
            "trials": stats.trials,
            "auth_pass_count": stats.auth_pass_count,
            "auth_pass_rate": _rate(stats.auth_pass_rate),
            "channel_check_errors": stats.channel_check_errors,
            "channel_check_total": stats.channel_check_total,
            "channel_check_error_rate": _rate(stats.channel_check_error_rate),
            "swap_check_errors": stats.swap_check_errors,
            "swap_check_total": stats.swap_check_total,
            "swap_check_error_rate": _rate(stats.swap_check_error_rate),
            "aborts_by_step": dict(sorted(stats.aborts_by_step.items())),
            "abort_rate_by_step": {step: _rate(rate) for step, rate
                                   in stats.abort_rate_by_step.items()},
            "exact_deliveries": stats.exact_deliveries,
            "message_fidelity": _rate(stats.message_fidelity),
            "eve_recoveries": stats.eve_recoveries,
            "eve_recovery_rate": _rate(stats.eve_recovery_rate),
        }
        if stats.transcripts is not None:
            entry["transcripts"] = stats.transcripts
        doc["results"].append(entry)
    return doc


def emit_report(results: list[AggregateStats], spec: ExperimentSpec, path) -> Path:
    """Write the report file; bytes depend only on config and tool version."""
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(report_document(results, spec), sort_keys=True, indent=2)
    path.write_text(text + "\n")
    return path


# -- demo walkthrough ---------------------------------------------------------

DEMO_SEED = 20060417
_DEMO_MESSAGE = (1, 0, 1)
_DEMO_INITS = (BellKind.PHI_PLUS, BellKind.PHI_PLUS, BellKind.PSI_PLUS)
_DEMO_KINDS = (BellKind.PHI_PLUS, BellKind.PSI_PLUS, BellKind.PSI_PLUS)
_DEMO_OWN_BITS = (0, 0, 1)


def demo_transcript_document(report: RunReport) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "demo_transcript",
        "transcript": report.transcript.to_jsonable(),
    }


def run_demo(*, debug_unsafe: bool = False,
             echo: Callable[[str], None] = print,
             out_path=None) -> RunReport:
    """Run the bundled three-bit walkthrough with scripted outcomes.

    Forces the initiator's state choices, the center's Bell outcomes and the
    initiator's own measurement outcomes through post-selection, then runs
    the ordinary protocol code path and narrates every public step.  Secret
    material (identities, state choices) stays hidden unless `debug_unsafe`.
    """
    rng = np.random.default_rng(derive(DEMO_SEED, STREAM_REGISTRY))
    registry = UserRegistry()
    registry.register("alice", IdSequence.random(4, rng))
    registry.register("bob", IdSequence.random(4, rng))
    config = SessionConfig(n_users=2, id_length=4, message_length=3,
                           channel_checks=0, swap_checks=0, seed=DEMO_SEED,
                           initiator="alice", responder="bob")
    forced = ForcedOutcomes(initiator_inits=_DEMO_INITS,
                            trent_kinds=_DEMO_KINDS,
                            initiator_bits=_DEMO_OWN_BITS)
    report = run_session(config, registry, message=_DEMO_MESSAGE, forced=forced)

    def bits(seq) -> str:
        return "".join(str(b) for b in seq)

    flips = report.transcript.first(FlipAnnouncement).bits
    inferred = tuple(f ^ m for f, m in zip(flips, _DEMO_MESSAGE))
    echo("three-bit walkthrough: alice sends 101 to bob through the center")
    if debug_unsafe:
        for user in ("alice", "bob"):
            echo(f"[secret] {user} identity: {bits(registry.identity_of(user).bits)}")
    else:
        echo("[secret] identities hidden (rerun with --debug-unsafe)")
    for user in ("alice", "bob"):
        echo(f"[auth] {user}: verdict {'pass' if report.auth_passed[user] else 'fail'}")
    if debug_unsafe:
        echo("[setup] alice's state choices: " +
             " ".join(k.value for k in _DEMO_INITS))
    else:
        echo("[setup] alice prepares 3 pairs; her state choices stay secret")
    announced = " ".join(k.bell_class.value for k in report.trent_kinds)
    echo(f"[swap] center announces classes: {announced}")
    echo(f"[swap] alice's own outcomes: {bits(_DEMO_OWN_BITS)}")
    echo(f"[swap] alice infers bob's outcomes: {bits(inferred)}")
    echo(f"[deliver] message: {bits(_DEMO_MESSAGE)}")
    echo(f"[deliver] flip announcement: {bits(flips)}")
    echo(f"[deliver] bob decodes: {bits(report.delivered_message)}")
    match = report.delivered_message == _DEMO_MESSAGE
    echo(f"delivered message matches sent message: {match}")
    if out_path is not None:
        path = Path(out_path)
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(demo_transcript_document(report),
                                   sort_keys=True, indent=2) + "\n")
        echo(f"transcript written to {path}")
    return report
