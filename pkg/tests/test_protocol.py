import math

import numpy as np
import pytest

from secalign.errors import InvalidArgumentError, RetryExhaustedError
from secalign.estimation import fidelity
from secalign.protocol import (
    AttackConfig,
    MessageKind,
    PartyRole,
    Scenario,
    SessionConfig,
    Verdict,
    announcement_uniformity_test,
    detect_eavesdropper,
    eve_information_leakage,
    plugin_mutual_information,
    replay,
    run_attack_session,
    run_honest_session,
    run_session,
)
from secalign.quantum import X, Direction

AXIS_3D = Direction.from_angles(1.0, 2.0)
AXIS_2D = Direction.from_angles(math.pi / 2, 0.7)
INTERCEPT = AttackConfig(Scenario.INTERCEPT_RESEND, 1.0)


def rotation(axis, angle):
    # Rodrigues formula
    k = np.asarray(axis, dtype=float) / np.linalg.norm(axis)
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + math.sin(angle) * kx + (1 - math.cos(angle)) * kx @ kx


@pytest.mark.parametrize("method,axis", [("2d", AXIS_2D), ("a", AXIS_3D), ("b", AXIS_3D)])
def test_honest_session_converges(method, axis):
    tr = run_honest_session(method, 20_000, axis, seed=1)
    assert fidelity(axis, tr.estimate_world) > 0.995


def test_estimate_is_in_estimators_frame():
    frame = rotation([1, 2, 3], 0.8)
    tr = run_honest_session("a", 20_000, AXIS_3D, frame=frame, seed=4)
    assert fidelity(AXIS_3D, tr.estimate_world) > 0.995
    local = frame @ AXIS_3D.vector
    assert fidelity(local, tr.estimate.m_e) > 0.995


def test_bob_can_announce():
    tr = run_honest_session("a", 5_000, AXIS_3D, seed=2, announcer=PartyRole.BOB)
    senders = {m.sender for m in tr.messages if m.kind is MessageKind.ANNOUNCE_RESULTS}
    assert senders == {PartyRole.BOB}
    assert fidelity(AXIS_3D, tr.estimate_world) > 0.99


def test_session_is_deterministic_and_replayable():
    a = run_honest_session("b", 50, AXIS_3D, seed=9, k_test=40)
    b = run_honest_session("b", 50, AXIS_3D, seed=9, k_test=40)
    assert a.serialize() == b.serialize()
    assert replay(a).serialize() == a.serialize()
    assert run_honest_session("b", 50, AXIS_3D, seed=10).messages != a.messages


def test_block_schedule_messages():
    tr = run_honest_session("a", 10, AXIS_3D, seed=0)
    kinds = [m.kind for m in tr.messages]
    assert kinds.count(MessageKind.PAIR_DELIVERY) == 2
    assert kinds.count(MessageKind.AXIS_PHASE_ADVANCE) == 3
    (ann,) = [m for m in tr.messages if m.kind is MessageKind.ANNOUNCE_RESULTS]
    assert len(ann.payload) == 30 and set(ann.payload) <= {1, -1}


def test_method_b_retries_then_exhausts():
    # near the equator at 45 degrees azimuth the shrunk correlations often leave the unit disc
    axis = Direction.from_angles(math.pi / 2 - 0.05, math.pi / 4)
    rounds = [run_honest_session("b", 10, axis, seed=s).rounds for s in range(60)]
    assert max(rounds) > 1
    seed = rounds.index(max(rounds))
    with pytest.raises(RetryExhaustedError) as info:
        run_honest_session("b", 10, axis, seed=seed, retries=0)
    assert not info.value.transcript.estimate.admissible


def test_config_validation():
    with pytest.raises(InvalidArgumentError):
        SessionConfig("2d", 10, AXIS_3D)  # axis not in the plane
    with pytest.raises(InvalidArgumentError):
        SessionConfig("a", 10, AXIS_3D, k_test=5)
    with pytest.raises(InvalidArgumentError):
        SessionConfig("a", 10, AXIS_3D, frame=np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(InvalidArgumentError):
        AttackConfig(Scenario.GHZ_ATTACK, 1.5)


@pytest.mark.parametrize("scenario", [Scenario.GHZ_ATTACK, Scenario.INTERCEPT_RESEND])
def test_zero_fraction_attack_is_a_no_op(scenario):
    honest = run_honest_session("a", 200, AXIS_3D, seed=6, k_test=50)
    attacked = run_attack_session(AttackConfig(scenario, 0.0), "a", 200, AXIS_3D, seed=6, k_test=50)
    assert [m.payload for m in attacked.announcements()] == [m.payload for m in honest.announcements()]
    assert attacked.estimate == honest.estimate
    assert attacked.verdict == honest.verdict


def test_intercept_correlation_shrinks_with_fraction():
    means = []
    for fraction in (0.0, 0.25, 0.5, 1.0):
        qs = [
            run_attack_session(AttackConfig(Scenario.INTERCEPT_RESEND, fraction), "2d", 2_000, X, seed=s).stats[0].q
            for s in range(5)
        ]
        means.append(np.mean(qs))
    assert all(np.diff(means) < 0)
    assert means[0] == pytest.approx(1.0, abs=0.01)
    assert means[-1] == pytest.approx(0.0, abs=0.03)


def test_ghz_attack_keeps_only_z_correlation():
    tr = run_attack_session(AttackConfig(Scenario.GHZ_ATTACK), "a", 4_000, AXIS_3D, seed=3)
    qx, qy, qz = (s.q for s in tr.stats)
    se = 1 / math.sqrt(4_000)
    assert abs(qx) < 5 * se and abs(qy) < 5 * se
    assert qz == pytest.approx(-AXIS_3D.z, abs=5 * se)


def test_intercept_gives_eve_the_axis():
    tr = run_attack_session(INTERCEPT, "a", 2_000, AXIS_3D, seed=8)
    report = eve_information_leakage(tr)
    assert report.eve_fidelity > 0.99
    assert fidelity(AXIS_3D, tr.estimate_world) < 0.9


def test_detection_verdicts():
    assert detect_eavesdropper("2d", 100, AXIS_2D, seed=1) is Verdict.PASS
    assert detect_eavesdropper("2d", 100, AXIS_2D, seed=1, attack=INTERCEPT) is Verdict.FAIL
    assert run_honest_session("a", 100, AXIS_3D, seed=1).verdict is Verdict.NOT_RUN


def test_honest_detection_false_alarm_rate_is_small():
    fails = sum(detect_eavesdropper("b", 60, AXIS_3D, seed=s, k_test=60) is Verdict.FAIL for s in range(100))
    assert fails <= 5


def test_public_record_leaks_nothing_about_the_axis():
    tr = run_honest_session("a", 3_000, AXIS_3D, seed=12)
    report = eve_information_leakage(tr)
    assert report.marginal_deviation < 1e-12
    assert report.announcement_looks_uniform
    assert report.eve_fidelity is None


def test_announced_bits_independent_of_axis():
    rng = np.random.default_rng(0)
    choices = [Direction.from_angles(t, p) for t, p in rng.uniform(0, [math.pi, 2 * math.pi], size=(4, 2))]
    labels, symbols, seqs = [], [], []
    for s in range(200):
        k = s % 4
        tr = run_honest_session("a", 40, choices[k], seed=s)
        bits = np.concatenate([m.payload for m in tr.announcements()])
        seqs.append(bits)
        labels.extend([k] * bits.size)
        symbols.extend(bits.tolist())
    assert plugin_mutual_information(labels, symbols) < 1e-3
    passed, _ = announcement_uniformity_test(seqs)
    assert passed


def test_unknown_method_rejected():
    with pytest.raises(InvalidArgumentError):
        run_session(SessionConfig("c", 10, AXIS_3D))


def test_method_a_rotation_equivariance():
    # rotating the axis and the estimator's frame together rotates the estimate
    rot = rotation([0.3, -1.0, 0.5], 1.3)
    for seed in range(20):
        plain = run_honest_session("a", 50, AXIS_3D, seed=seed)
        turned = run_honest_session("a", 50, rot @ AXIS_3D.vector, frame=rot.T, seed=seed)
        assert np.allclose(turned.estimate_world, rot @ plain.estimate_world, atol=1e-9)
