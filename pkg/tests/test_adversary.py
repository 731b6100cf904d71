"""Attack models: taps, detection statistics, reconstruction, impersonation."""

import numpy as np
import pytest

import oracles
from mqdc.adversary import (
    AttackReport,
    Basis,
    ImpersonateUser,
    InterceptResend,
    NoAttack,
    TapRecord,
    build_attack,
    impersonation_attempt,
    reconstruct_message,
    tap_intercept_resend,
    trent_reconstruction,
)
from mqdc.messages import FlipAnnouncement, Transcript
from mqdc.protocol import (
    ChannelLeg,
    ConfigError,
    IdSequence,
    SessionConfig,
    UserRegistry,
    authenticate,
    run_session,
)
from mqdc.quantum import BellKind, StateRegister


def make_registry(id_length=8, seed=7, users=("alice", "bob")):
    rng = np.random.default_rng(seed)
    registry = UserRegistry()
    for user in users:
        registry.register(user, IdSequence.random(id_length, rng))
    return registry


def config(**overrides):
    base = dict(n_users=2, id_length=8, message_length=8, channel_checks=2,
                swap_checks=2, seed=99, initiator="alice", responder="bob")
    base.update(overrides)
    return SessionConfig(**base)


# -- the tap primitive -----------------------------------------------------------


def test_z_tap_preserves_z_correlations():
    reg = StateRegister(1)
    book = []
    for _ in range(300):
        q1, q2 = reg.alloc_bell_pair(BellKind.PHI_PLUS)
        eve = tap_intercept_resend(reg, q1, Basis.Z, book,
                                   leg=ChannelLeg.A_SEQUENCE, position=0)
        b1 = reg.measure_z(q1)
        b2 = reg.measure_z(q2)
        assert b1 == b2 == eve
        reg.release(q1)
        reg.release(q2)


def test_x_tap_halves_z_agreement():
    expected = 1.0 - oracles.channel_check_error_prob("phi+", "X")
    reg = StateRegister(2)
    trials = 4_000
    agree = 0
    for _ in range(trials):
        q1, q2 = reg.alloc_bell_pair(BellKind.PHI_PLUS)
        tap_intercept_resend(reg, q1, Basis.X, [],
                             leg=ChannelLeg.A_SEQUENCE, position=0)
        agree += reg.measure_z(q1) == reg.measure_z(q2)
        reg.release(q1)
        reg.release(q2)
    assert abs(agree / trials - expected) <= oracles.binomial_margin(expected, trials)


def test_x_tap_invisible_on_hadamard_encoded_pair():
    # frozen from the branch-enumeration oracle: zero detection probability
    assert oracles.auth_detection_prob("X", 1) == pytest.approx(0.0, abs=1e-12)
    reg = StateRegister(3)
    for _ in range(400):
        center_q, auth_q = reg.alloc_bell_pair(BellKind.PHI_PLUS)
        reg.apply_hadamard(auth_q)                      # identity bit 1
        tap_intercept_resend(reg, auth_q, Basis.X, [],
                             leg=ChannelLeg.AUTH, position=0)
        reg.apply_hadamard(auth_q)                      # honest decode
        assert reg.measure_z(auth_q) == reg.measure_z(center_q)
        reg.release(auth_q)
        reg.release(center_q)


def test_tap_records_positions_and_outcomes():
    reg = StateRegister(4)
    book = []
    q1, q2 = reg.alloc_bell_pair(BellKind.PHI_PLUS)
    outcome = tap_intercept_resend(reg, q1, Basis.Z, book,
                                   leg=ChannelLeg.B_SEQUENCE, position=17)
    assert book == [TapRecord(ChannelLeg.B_SEQUENCE, 17, outcome)]


# -- detection statistics against the oracle --------------------------------------


@pytest.mark.parametrize("basis,id_bit", [
    (Basis.Z, 0), (Basis.Z, 1), (Basis.X, 0), (Basis.X, 1),
])
def test_auth_tap_detection_rates(basis, id_bit):
    expected = oracles.auth_detection_prob(basis.value, id_bit)
    registry = UserRegistry()
    registry.register("alice", IdSequence((id_bit,)))
    attack = InterceptResend(ChannelLeg.AUTH, basis)
    attack.bind_session(0)
    reg = StateRegister(40 + id_bit)
    trials = 2_000
    detections = sum(
        authenticate(reg, registry, "alice", attack=attack).mismatches
        for _ in range(trials))
    rate = detections / trials
    if expected == 0.0:
        assert detections == 0
    else:
        assert abs(rate - expected) <= oracles.binomial_margin(expected, trials)


def test_a_sequence_z_tap_is_invisible_and_readable():
    cfg = config(attack={"name": "intercept-resend", "leg": "a_sequence",
                         "basis": "Z"})
    registry = make_registry()
    for seed in range(150):
        report = run_session(config(seed=seed, attack=cfg.attack), registry)
        assert report.aborted_at is None
        assert report.channel_check_errors[0] == 0
        assert report.swap_check_errors[0] == 0
        assert report.eve_recovered_message == report.sent_message
        assert report.delivered_message == report.sent_message


def test_x_tap_channel_check_detection_rate():
    expected = oracles.channel_check_error_prob("phi+", "X")
    registry = make_registry(id_length=1)
    errors = total = 0
    for seed in range(1_500):
        cfg = config(id_length=1, message_length=1, channel_checks=1,
                     swap_checks=0, seed=seed,
                     attack={"name": "intercept-resend", "leg": "a_sequence",
                             "basis": "X"})
        report = run_session(cfg, registry)
        e, t = report.channel_check_by_user["alice"]
        errors += e
        total += t
    assert abs(errors / total - expected) <= oracles.binomial_margin(expected, total)


def test_b_sequence_tap_touches_only_responder_leg():
    registry = make_registry(id_length=1)
    errors_a = errors_b = total = 0
    for seed in range(800):
        cfg = config(id_length=1, message_length=1, channel_checks=1,
                     swap_checks=0, seed=seed,
                     attack={"name": "intercept-resend", "leg": "b_sequence",
                             "basis": "X"})
        report = run_session(cfg, registry)
        ea, t = report.channel_check_by_user["alice"]
        eb, _ = report.channel_check_by_user["bob"]
        errors_a += ea
        errors_b += eb
        total += t
    assert errors_a == 0
    expected = oracles.channel_check_error_prob("phi+", "X")
    assert abs(errors_b / total - expected) <= oracles.binomial_margin(expected, total)


# -- reconstruction ---------------------------------------------------------------


def test_reconstruct_requires_a_sequence_z():
    registry = make_registry()
    for descriptor in (
            {"name": "intercept-resend", "leg": "b_sequence", "basis": "Z"},
            {"name": "intercept-resend", "leg": "auth", "basis": "Z"},
    ):
        report = run_session(config(seed=5, attack=descriptor), registry)
        assert report.eve_recovered_message is None


def test_no_attack_reconstructs_nothing():
    registry = make_registry()
    report = run_session(config(attack={"name": "no-attack"}), registry)
    assert report.eve_recovered_message is None
    assert report.attack_report is None


def test_reconstruct_missing_taps_returns_none():
    registry = make_registry()
    report = run_session(config(seed=11), registry)  # honest, complete
    # records cover only part of the message slots
    partial = [TapRecord(ChannelLeg.A_SEQUENCE, 0, 0)]
    assert reconstruct_message(partial, report.transcript) is None


def test_reconstruct_on_aborted_transcript_returns_none():
    registry = make_registry()
    cfg = config(attack={"name": "intercept-resend", "leg": "a_sequence",
                         "basis": "X"})
    for seed in range(30):
        report = run_session(config(seed=seed, attack=cfg.attack), registry)
        if report.aborted_at is not None:
            attack = InterceptResend(ChannelLeg.A_SEQUENCE, Basis.Z)
            assert attack.reconstruct_message(report.transcript) is None
            return
    pytest.fail("X tap never aborted")


def test_partial_fraction_intercepts_subset_deterministically():
    registry = make_registry()
    descriptor = {"name": "intercept-resend", "leg": "a_sequence",
                  "basis": "Z", "fraction": 0.4}
    counts = []
    for _ in range(2):
        report = run_session(config(seed=3, message_length=32,
                                    attack=descriptor), registry)
        counts.append(report.attack_report.intercepted_count)
    assert counts[0] == counts[1]
    assert 0 < counts[0] < 36  # 32 + 2 + 2 slots on the tapped leg


def test_partial_fraction_rate_matches_parameter():
    registry = make_registry(id_length=1)
    fraction = 0.3
    taps = slots = 0
    for seed in range(400):
        cfg = config(id_length=1, message_length=8, channel_checks=0,
                     swap_checks=0, seed=seed,
                     attack={"name": "intercept-resend", "leg": "a_sequence",
                             "basis": "Z", "fraction": fraction})
        report = run_session(cfg, registry)
        taps += report.attack_report.intercepted_count
        slots += 8
    assert abs(taps / slots - fraction) <= oracles.binomial_margin(fraction, slots)


def test_attack_report_contents():
    registry = make_registry()
    descriptor = {"name": "intercept-resend", "leg": "a_sequence", "basis": "Z"}
    report = run_session(config(seed=8, attack=descriptor), registry)
    attack_report = report.attack_report
    assert isinstance(attack_report, AttackReport)
    assert attack_report.intercepted_count == 12  # 8 + 2 + 2 slots, fraction 1
    assert attack_report.detection_events == {
        "auth": 0, "channel_check": 0, "swap_check": 0}
    assert attack_report.recovered_message == report.sent_message
    assert "flip" in attack_report.recovery_method


# -- impersonation ----------------------------------------------------------------


def test_impersonation_with_true_identity_passes():
    registry = make_registry()
    result = impersonation_attempt(StateRegister(0), registry, "alice",
                                   registry.identity_of("alice"))
    assert result.passed


def test_impersonation_uniform_guess_session_rate():
    registry = make_registry()
    expected = oracles.impersonation_pass_prob(8)
    trials = 2_000
    passes = 0
    for seed in range(trials):
        cfg = config(seed=seed, message_length=2, channel_checks=1,
                     swap_checks=1,
                     attack={"name": "impersonate", "target": "alice",
                             "guessed_id": "uniform-random"})
        report = run_session(cfg, registry)
        passes += report.auth_passed["alice"]
        if not report.auth_passed["alice"]:
            assert report.aborted_at == "auth:alice"
    assert abs(passes / trials - expected) <= oracles.binomial_margin(expected, trials)


def test_impersonation_of_responder():
    registry = make_registry()
    cfg = config(attack={"name": "impersonate", "target": "bob",
                         "guessed_id": "uniform-random"})
    aborted_at_bob = False
    for seed in range(20):
        report = run_session(config(seed=seed, attack=cfg.attack), registry)
        assert report.auth_passed["alice"] is True
        if not report.auth_passed.get("bob", True):
            assert report.aborted_at == "auth:bob"
            aborted_at_bob = True
    assert aborted_at_bob


# -- the center's view -------------------------------------------------------------


def test_trent_reconstruction_is_chance_level():
    registry = make_registry()
    hits = total = 0
    for seed in range(400):
        report = run_session(config(seed=seed), registry)
        guess = trent_reconstruction(report.trent_kinds, report.transcript)
        assert guess is not None
        hits += sum(g == m for g, m in zip(guess, report.sent_message))
        total += len(report.sent_message)
    assert abs(hits / total - 0.5) <= oracles.binomial_margin(0.5, total)


def test_trent_reconstruction_none_without_announcements():
    assert trent_reconstruction((), Transcript()) is None


# -- hygiene -----------------------------------------------------------------------


def test_no_attack_is_observationally_absent():
    registry = make_registry()
    plain = run_session(config(seed=21), registry)
    explicit = run_session(config(seed=21, attack={"name": "no-attack"}), registry)
    assert plain.transcript.to_json() == explicit.transcript.to_json()
    assert plain.delivered_message == explicit.delivered_message
    instance = NoAttack()
    with_instance = run_session(config(seed=21, attack=instance), registry)
    assert with_instance.transcript.to_json() == plain.transcript.to_json()


def test_attacked_sessions_stay_deterministic():
    registry = make_registry()
    for descriptor in (
            {"name": "intercept-resend", "leg": "a_sequence", "basis": "Z"},
            {"name": "intercept-resend", "leg": "auth", "basis": "X",
             "fraction": 0.5},
            {"name": "impersonate", "target": "alice"},
    ):
        r1 = run_session(config(seed=31, attack=descriptor), registry)
        r2 = run_session(config(seed=31, attack=descriptor), registry)
        assert r1 == r2


def test_build_attack_validation():
    with pytest.raises(ConfigError, match="name"):
        build_attack({"name": "teleport-spoof"})
    with pytest.raises(ConfigError, match="leg"):
        build_attack({"name": "intercept-resend", "leg": "c_sequence",
                      "basis": "Z"})
    with pytest.raises(ConfigError, match="basis"):
        build_attack({"name": "intercept-resend", "leg": "auth", "basis": "Y"})
    with pytest.raises(ConfigError, match="fraction"):
        build_attack({"name": "intercept-resend", "leg": "auth", "basis": "Z",
                      "fraction": 0.0})
    with pytest.raises(ConfigError, match="guessed_id"):
        build_attack({"name": "impersonate", "target": "alice",
                      "guessed_id": "012"})
    with pytest.raises(ConfigError, match="unexpected"):
        build_attack({"name": "no-attack", "leg": "auth"})
    attack = build_attack({"name": "intercept-resend", "leg": "a_sequence",
                           "basis": "Z"})
    assert attack.descriptor() == {"name": "intercept-resend",
                                   "leg": "a_sequence", "basis": "Z",
                                   "fraction": 1.0}


def test_impersonate_fixed_guess_descriptor_roundtrip():
    attack = build_attack({"name": "impersonate", "target": "bob",
                           "guessed_id": "0101"})
    assert isinstance(attack, ImpersonateUser)
    assert attack.descriptor()["guessed_id"] == "0101"
    guess = attack.identity_for_decode("bob", 4)
    assert guess.bits == (0, 1, 0, 1)
    assert attack.identity_for_decode("alice", 4) is None
