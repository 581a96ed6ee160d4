"""
Message-level simulation of the alignment protocol.

Quantum states live only in ``_PairStore``; parties hold opaque integer
handles and can do nothing with them except ask for a projective
measurement of the qubit they hold. Measurements collapse the stored state,
so joint statistics follow from the Born rule whatever order the parties
measure in.

Randomness: the session seed feeds a ``SeedSequence`` with two children,
one for pairs prepared by the Dealer and one for everything Eve does. Each
prepared pair draws one uniform per qubit when it is created, so an attack
with fraction 0 leaves the honest outcomes untouched.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import InvalidArgumentError, RetryExhaustedError
from ..estimation import (
    BLOCK_AXES,
    METHOD_2D,
    METHOD_A,
    CorrelationStat,
    DirectionEstimate,
    estimate_2d,
    estimate_method_a,
    estimate_method_b,
)
from ..quantum import PureState, ghz_state, measure_qubit, singlet_state
from .messages import (
    AttackConfig,
    Message,
    MessageKind,
    PartyRole,
    ProtocolTranscript,
    Scenario,
    SessionConfig,
    Verdict,
)
from .security import detection_test

_ROLE_CODE = {PartyRole.DEALER: 0, PartyRole.ALICE: 1, PartyRole.BOB: 2, PartyRole.EVE: 3}


@dataclass
class _Batch:
    start: int
    states: np.ndarray
    holders: np.ndarray
    uniforms: np.ndarray
    measured: np.ndarray
    order: np.ndarray


class _PairStore:
    """The simulator's hidden environment of prepared qubit pairs (and triples)."""

    def __init__(self):
        self._batches: list[_Batch] = []
        self._starts: list[int] = []
        self._next = 0

    def create(self, state: PureState, count: int, holders, rng) -> np.ndarray:
        k = state.n_qubits
        codes = np.array([_ROLE_CODE[h] for h in holders], dtype=np.int8)
        batch = _Batch(
            start=self._next,
            states=np.tile(state.amplitudes, (count, 1)),
            holders=np.tile(codes, (count, 1)),
            uniforms=rng.random((count, k)),
            measured=np.zeros((count, k), dtype=bool),
            order=np.zeros(count, dtype=np.int64),
        )
        self._batches.append(batch)
        self._starts.append(self._next)
        handles = np.arange(self._next, self._next + count, dtype=np.int64)
        self._next += count
        return handles

    def _groups(self, handles: np.ndarray):
        idx = np.searchsorted(self._starts, handles, side="right") - 1
        if np.any(idx < 0) or np.any(handles >= self._next):
            raise InvalidArgumentError("unknown pair handle")
        for b in np.unique(idx):
            pos = np.nonzero(idx == b)[0]
            batch = self._batches[b]
            yield batch, handles[pos] - batch.start, pos

    def _slots(self, batch: _Batch, rows: np.ndarray, role: PartyRole) -> np.ndarray:
        held = batch.holders[rows] == _ROLE_CODE[role]
        if not np.all(held.sum(axis=1) == 1):
            raise InvalidArgumentError(f"{role.value} does not hold a qubit of every requested pair")
        return held.argmax(axis=1)

    def transfer(self, handles, from_role: PartyRole, to_role: PartyRole) -> None:
        for batch, rows, _ in self._groups(np.asarray(handles, dtype=np.int64)):
            slots = self._slots(batch, rows, from_role)
            batch.holders[rows, slots] = _ROLE_CODE[to_role]

    def measure(self, role: PartyRole, handles, axis) -> np.ndarray:
        handles = np.asarray(handles, dtype=np.int64)
        out = np.empty(handles.size, dtype=np.int8)
        for batch, rows, pos in self._groups(handles):
            slots = self._slots(batch, rows, role)
            if np.any(batch.measured[rows, slots]):
                raise InvalidArgumentError("qubit already measured")
            for s in np.unique(slots):
                sel = slots == s
                r = rows[sel]
                u = batch.uniforms[r, batch.order[r]]
                outcomes, post = measure_qubit(batch.states[r], int(s), axis, u)
                batch.states[r] = post
                batch.measured[r, s] = True
                batch.order[r] += 1
                out[pos[sel]] = outcomes
        return out


def _stat(a: np.ndarray, b: np.ndarray) -> CorrelationStat:
    a = np.asarray(a)
    b = np.asarray(b)
    return CorrelationStat.from_counts(
        int(np.count_nonzero((a == 1) & (b == 1))),
        int(np.count_nonzero((a == 1) & (b == -1))),
        int(np.count_nonzero((a == -1) & (b == 1))),
        int(np.count_nonzero((a == -1) & (b == -1))),
    )


def _estimate(method: str, stats, hemisphere: int) -> DirectionEstimate:
    if method == METHOD_2D:
        return estimate_2d(stats[0])
    if method == METHOD_A:
        return estimate_method_a(*stats)
    return estimate_method_b(*stats, hemisphere=hemisphere)


class _Dealer:
    role = PartyRole.DEALER

    def __init__(self, session: "_Session"):
        self.s = session

    def start(self):
        self.deliver(self.s.pairs_per_round)

    def deliver(self, count: int):
        cfg = self.s.config
        handles = self.s.store.create(singlet_state(), count, (cfg.announcer, cfg.estimator), self.s.dealer_rng)
        self.s.send(self.role, cfg.announcer, MessageKind.PAIR_DELIVERY, handles)
        self.s.send(self.role, cfg.estimator, MessageKind.PAIR_DELIVERY, handles)

    def handle(self, msg: Message):
        if msg.kind is MessageKind.AXIS_PHASE_ADVANCE:
            self.deliver(self.s.pairs_per_round)
        elif msg.kind is MessageKind.VERIFICATION_CHALLENGE:
            self.deliver(int(msg.payload[0]))


class _Announcer:
    """Measures every pair along its private axis and publishes the outcomes on request."""

    def __init__(self, session: "_Session"):
        self.s = session
        self.role = session.config.announcer
        self.axis = np.asarray(session.config.axis)
        self.outcomes = None
        self.verdict = None

    def handle(self, msg: Message):
        if msg.kind is MessageKind.PAIR_DELIVERY:
            self.outcomes = self.s.store.measure(self.role, msg.payload, self.axis)
        elif msg.kind is MessageKind.AXIS_PHASE_ADVANCE:
            _, block, n_blocks, _, _ = msg.payload
            if block == n_blocks - 1:
                self.s.send(self.role, msg.sender, MessageKind.ANNOUNCE_RESULTS, self.outcomes)
        elif msg.kind is MessageKind.VERIFICATION_CHALLENGE:
            self.s.send(self.role, msg.sender, MessageKind.ANNOUNCE_RESULTS, self.outcomes)
        elif msg.kind is MessageKind.VERIFICATION_OUTCOME:
            self.verdict = Verdict.PASS if msg.payload[0] == 1 else Verdict.FAIL


class _Estimator:
    """Measures along its own frame axes, then estimates from the announced outcomes."""

    def __init__(self, session: "_Session"):
        self.s = session
        cfg = session.config
        self.role = cfg.estimator
        self.frame = np.asarray(cfg.frame)
        self.phase = "align"
        self.round = 0
        self.outcomes = None
        self.stats = None
        self.estimate: Optional[DirectionEstimate] = None
        self.p_value = None
        self.verdict = Verdict.NOT_RUN

    def _axis_world(self) -> np.ndarray:
        return self.frame.T @ self.estimate.m_e.vector

    def handle(self, msg: Message):
        cfg = self.s.config
        if msg.kind is MessageKind.PAIR_DELIVERY:
            handles = np.asarray(msg.payload, dtype=np.int64)
            if self.phase == "align":
                blocks = BLOCK_AXES[cfg.method]
                self.outcomes = np.empty(handles.size, dtype=np.int8)
                for j, axis_index in enumerate(blocks):
                    sl = slice(j * cfg.n, (j + 1) * cfg.n)
                    self.outcomes[sl] = self.s.store.measure(self.role, handles[sl], self.frame[axis_index])
                    self.s.send(
                        self.role, cfg.announcer, MessageKind.AXIS_PHASE_ADVANCE,
                        (self.round, j, len(blocks), sl.start, sl.stop),
                    )
            else:
                self.outcomes = self.s.store.measure(self.role, handles, self._axis_world())
                self.s.send(self.role, cfg.announcer, MessageKind.VERIFICATION_CHALLENGE, (handles.size,))
        elif msg.kind is MessageKind.ANNOUNCE_RESULTS:
            announced = np.asarray(msg.payload, dtype=np.int8)
            if self.phase == "align":
                self._align(announced)
            else:
                self._verify(announced)

    def _align(self, announced: np.ndarray):
        cfg = self.s.config
        n = cfg.n
        self.stats = tuple(
            _stat(announced[j * n:(j + 1) * n], self.outcomes[j * n:(j + 1) * n])
            for j in range(len(BLOCK_AXES[cfg.method]))
        )
        est = _estimate(cfg.method, self.stats, cfg.hemisphere)
        self.estimate = est
        if est.m_e is None:
            if self.round >= cfg.retries:
                raise RetryExhaustedError(f"no usable estimate after {self.round + 1} rounds")
            self.round += 1
            self.s.send(self.role, PartyRole.DEALER, MessageKind.AXIS_PHASE_ADVANCE, (self.round,))
            return
        if cfg.k_test:
            self.phase = "test"
            self.s.send(self.role, PartyRole.DEALER, MessageKind.VERIFICATION_CHALLENGE, (cfg.k_test,))
        else:
            self.phase = "done"

    def _verify(self, announced: np.ndarray):
        cfg = self.s.config
        concordant = int(np.count_nonzero(announced == self.outcomes))
        self.verdict, self.p_value = detection_test(
            cfg.method, self.stats, self.estimate.m_e.vector, concordant, announced.size,
            cfg.alpha, cfg.hemisphere,
        )
        self.phase = "done"
        self.s.send(
            self.role, cfg.announcer, MessageKind.VERIFICATION_OUTCOME,
            (1 if self.verdict is Verdict.PASS else 0,),
        )


class _Eve:
    """Adversary sitting on the pair-distribution channel and reading all public messages."""

    role = PartyRole.EVE

    def __init__(self, session: "_Session", attack: AttackConfig):
        self.s = session
        self.attack = attack
        self.frame = np.asarray(attack.eve_frame)
        cfg = session.config
        # both deliveries pass through Eve so the parties measure in the honest order
        self.targets = {cfg.announcer, cfg.estimator}
        self.expect_test = False
        self.positions = None
        self.substitutes = None
        self.outcomes = None
        self.estimate: Optional[DirectionEstimate] = None
        self.stats = None

    def intercept(self, msg: Message):
        cfg = self.s.config
        handles = np.asarray(msg.payload, dtype=np.int64)
        out = handles.copy()
        if msg.receiver == cfg.announcer:
            count = handles.size
            k = int(round(self.attack.fraction * count))
            self.positions = np.sort(self.s.eve_rng.permutation(count)[:k]) if k else np.empty(0, dtype=np.int64)
            self.outcomes = np.zeros(count, dtype=np.int8)
            if k:
                if self.attack.scenario is Scenario.GHZ_ATTACK:
                    self.substitutes = self.s.store.create(
                        ghz_state(), k, (cfg.announcer, cfg.estimator, PartyRole.EVE), self.s.eve_rng
                    )
                    self.outcomes[self.positions] = self.s.store.measure(self.role, self.substitutes, self.frame[2])
                else:
                    originals = handles[self.positions]
                    self.s.store.transfer(originals, cfg.announcer, self.role)
                    self.s.store.measure(self.role, originals, self.frame[2])
                    self.substitutes = self.s.store.create(
                        singlet_state(), k, (cfg.announcer, self.role), self.s.eve_rng
                    )
                    self._measure_announcer_side()
                out[self.positions] = self.substitutes
        elif self.attack.scenario is Scenario.GHZ_ATTACK and self.positions is not None and self.positions.size:
            out[self.positions] = self.substitutes
        self.s.send(self.role, msg.receiver, MessageKind.PAIR_DELIVERY, out)

    def _measure_announcer_side(self):
        """Eve measures her halves of the substituted singlets with the protocol's public block schedule."""
        n = self.s.config.n
        if self.expect_test:
            self.outcomes[self.positions] = self.s.store.measure(self.role, self.substitutes, self.frame[2])
            return
        blocks = BLOCK_AXES[self.s.config.method]
        block_of = self.positions // n
        for j, axis_index in enumerate(blocks):
            sel = block_of == j
            if np.any(sel):
                self.outcomes[self.positions[sel]] = self.s.store.measure(
                    self.role, self.substitutes[sel], self.frame[axis_index]
                )

    def observe(self, msg: Message):
        cfg = self.s.config
        if msg.kind is MessageKind.VERIFICATION_CHALLENGE and msg.receiver is PartyRole.DEALER:
            self.expect_test = True
        elif (
            msg.kind is MessageKind.ANNOUNCE_RESULTS
            and not self.expect_test
            and self.attack.scenario is Scenario.INTERCEPT_RESEND
            and self.positions is not None
        ):
            announced = np.asarray(msg.payload, dtype=np.int8)
            n = cfg.n
            stats = []
            for j in range(len(BLOCK_AXES[cfg.method])):
                pos = self.positions[(self.positions >= j * n) & (self.positions < (j + 1) * n)]
                if pos.size == 0:
                    return
                stats.append(_stat(announced[pos], self.outcomes[pos]))
            self.stats = tuple(stats)
            self.estimate = _estimate(cfg.method, self.stats, cfg.hemisphere)


@dataclass
class _Session:
    config: SessionConfig
    log: list = field(default_factory=list)

    def __post_init__(self):
        dealer_seed, eve_seed = np.random.SeedSequence(self.config.seed).spawn(2)
        self.dealer_rng = np.random.default_rng(dealer_seed)
        self.eve_rng = np.random.default_rng(eve_seed)
        self.store = _PairStore()
        self.queue: deque = deque()
        self.pairs_per_round = self.config.n * len(BLOCK_AXES[self.config.method])
        self.dealer = _Dealer(self)
        self.announcer = _Announcer(self)
        self.estimator = _Estimator(self)
        self.eve = None if self.config.scenario is Scenario.HONEST else _Eve(self, self.config.attack)
        self.parties = {
            PartyRole.DEALER: self.dealer,
            self.config.announcer: self.announcer,
            self.config.estimator: self.estimator,
        }

    def send(self, sender: PartyRole, receiver: PartyRole, kind: MessageKind, payload) -> None:
        msg = Message(len(self.log), sender, receiver, kind, tuple(int(v) for v in payload))
        self.log.append(msg)
        self.queue.append(msg)

    def run(self) -> ProtocolTranscript:
        self.dealer.start()
        while self.queue:
            msg = self.queue.popleft()
            if (
                self.eve is not None
                and msg.kind is MessageKind.PAIR_DELIVERY
                and msg.sender is PartyRole.DEALER
                and msg.receiver in self.eve.targets
            ):
                self.eve.intercept(msg)
                continue
            self.parties[msg.receiver].handle(msg)
            if self.eve is not None and msg.kind is not MessageKind.PAIR_DELIVERY:
                self.eve.observe(msg)
        return self.transcript()

    def transcript(self) -> ProtocolTranscript:
        est = self.estimator
        return ProtocolTranscript(
            session_id=self.config.session_id(),
            config=self.config,
            messages=tuple(self.log),
            estimate=est.estimate,
            stats=est.stats,
            rounds=est.round + 1,
            verdict=est.verdict,
            p_value=est.p_value,
            eve_estimate=None if self.eve is None else self.eve.estimate,
            eve_stats=None if self.eve is None else self.eve.stats,
        )


def run_session(config: SessionConfig) -> ProtocolTranscript:
    session = _Session(config)
    try:
        return session.run()
    except RetryExhaustedError as exc:
        exc.transcript = session.transcript()
        raise


def run_honest_session(
    method: str,
    n: int,
    axis,
    frame=None,
    seed: int = 0,
    *,
    announcer: PartyRole = PartyRole.ALICE,
    hemisphere: int = 1,
    retries: int = 16,
    k_test: int = 0,
    alpha: float = 0.01,
) -> ProtocolTranscript:
    """Run one honest session.

    ``axis`` is the announcing party's private measurement direction and
    ``frame`` the estimating party's axes (rows), both in simulator
    coordinates. Set ``k_test`` to append the eavesdropper test.
    """
    config = SessionConfig(
        method, n, axis, frame, seed, announcer, hemisphere, retries, k_test, alpha, AttackConfig(Scenario.HONEST)
    )
    return run_session(config)


def run_attack_session(
    attack: AttackConfig,
    method: str,
    n: int,
    axis,
    frame=None,
    seed: int = 0,
    *,
    announcer: PartyRole = PartyRole.ALICE,
    hemisphere: int = 1,
    retries: int = 16,
    k_test: int = 0,
    alpha: float = 0.01,
) -> ProtocolTranscript:
    config = SessionConfig(method, n, axis, frame, seed, announcer, hemisphere, retries, k_test, alpha, attack)
    return run_session(config)


def replay(transcript: ProtocolTranscript) -> ProtocolTranscript:
    """Re-run the session recorded in ``transcript`` from its stored configuration and seed."""
    return run_session(transcript.config)


def detect_eavesdropper(
    method: str,
    n: int,
    axis,
    frame=None,
    seed: int = 0,
    *,
    k_test: int = 200,
    alpha: float = 0.01,
    attack: Optional[AttackConfig] = None,
    **kwargs,
) -> Verdict:
    """Run a session followed by ``k_test`` sacrificial pairs on the aligned axes; return the verdict."""
    if k_test < 30:
        raise InvalidArgumentError("k_test must be at least 30")
    attack = attack or AttackConfig(Scenario.HONEST)
    config = SessionConfig(method, n, axis, frame, seed, attack=attack, k_test=k_test, alpha=alpha, **kwargs)
    return run_session(config).verdict
