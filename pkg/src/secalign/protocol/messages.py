"""Protocol message types and the line-based transcript format.

Transcript format (UTF-8, one record per line)::

    # secalign-transcript 1
    # config <json>
    # result <json>
    <seq>\t<sender>\t<receiver>\t<kind>\t<payload>

``payload`` is a comma-separated list of integers (+/-1 outcomes, opaque
pair handles or small control fields); it may be empty. Header lines carry
simulator metadata (the session configuration needed for replay and the
parties' private results) and are not part of the public channel.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from ..errors import InvalidArgumentError, TranscriptError
from ..estimation import METHOD_2D, CorrelationStat, DirectionEstimate, check_method
from ..quantum import Direction

FORMAT_LINE = "# secalign-transcript 1"


class PartyRole(str, Enum):
    DEALER = "Dealer"
    ALICE = "Alice"
    BOB = "Bob"
    EVE = "Eve"


class MessageKind(str, Enum):
    PAIR_DELIVERY = "PairDelivery"
    ANNOUNCE_RESULTS = "AnnounceResults"
    AXIS_PHASE_ADVANCE = "AxisPhaseAdvance"
    VERIFICATION_CHALLENGE = "VerificationChallenge"
    VERIFICATION_OUTCOME = "VerificationOutcome"


class Scenario(str, Enum):
    HONEST = "Honest"
    GHZ_ATTACK = "GhzAttack"
    INTERCEPT_RESEND = "InterceptResend"


class Verdict(str, Enum):
    NOT_RUN = "NotRun"
    PASS = "Pass"
    FAIL = "Fail"


@dataclass(frozen=True)
class Message:
    seq: int
    sender: PartyRole
    receiver: PartyRole
    kind: MessageKind
    payload: tuple = ()

    def to_line(self) -> str:
        body = ",".join(str(int(v)) for v in self.payload)
        return f"{self.seq}\t{self.sender.value}\t{self.receiver.value}\t{self.kind.value}\t{body}"

    @classmethod
    def from_line(cls, line: str, lineno: int = 0) -> "Message":
        parts = line.split("\t")
        if len(parts) != 5:
            raise TranscriptError(f"line {lineno}: expected 5 tab-separated fields, got {len(parts)}")
        try:
            payload = tuple(int(tok) for tok in parts[4].split(",")) if parts[4] else ()
            return cls(int(parts[0]), PartyRole(parts[1]), PartyRole(parts[2]), MessageKind(parts[3]), payload)
        except ValueError as exc:
            raise TranscriptError(f"line {lineno}: {exc}") from None


IDENTITY = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))


def _frame_tuple(frame) -> tuple:
    if frame is None:
        return IDENTITY
    mat = np.asarray(frame, dtype=float)
    if mat.shape != (3, 3) or not np.allclose(mat @ mat.T, np.eye(3), atol=1e-9):
        raise InvalidArgumentError("frame must be a 3x3 orthonormal matrix (rows are the axes)")
    if np.linalg.det(mat) < 0:
        raise InvalidArgumentError("frame must be right-handed")
    return tuple(tuple(float(v) for v in row) for row in mat)


@dataclass(frozen=True)
class AttackConfig:
    scenario: Scenario = Scenario.HONEST
    fraction: float = 1.0
    eve_frame: tuple = IDENTITY

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        if not 0.0 <= float(self.fraction) <= 1.0:
            raise InvalidArgumentError(f"attack fraction must lie in [0, 1], got {self.fraction}")
        object.__setattr__(self, "fraction", float(self.fraction))
        object.__setattr__(self, "eve_frame", _frame_tuple(self.eve_frame))


@dataclass(frozen=True)
class SessionConfig:
    """Everything needed to (re)run a session; ``axis`` and ``frame`` are private to the parties."""

    method: str
    n: int
    axis: tuple
    frame: tuple = IDENTITY
    seed: int = 0
    announcer: PartyRole = PartyRole.ALICE
    hemisphere: int = 1
    retries: int = 16
    k_test: int = 0
    alpha: float = 0.01
    attack: AttackConfig = field(default_factory=AttackConfig)

    def __post_init__(self):
        object.__setattr__(self, "method", check_method(self.method))
        if int(self.n) < 1:
            raise InvalidArgumentError("n must be >= 1")
        object.__setattr__(self, "n", int(self.n))
        axis = self.axis.vector if isinstance(self.axis, Direction) else np.asarray(self.axis, dtype=float)
        if axis.shape != (3,) or abs(float(np.linalg.norm(axis)) - 1.0) > 1e-9:
            raise InvalidArgumentError("axis must be a unit 3-vector")
        object.__setattr__(self, "axis", tuple(float(v) for v in axis))
        object.__setattr__(self, "frame", _frame_tuple(self.frame))
        object.__setattr__(self, "announcer", PartyRole(self.announcer))
        if self.announcer not in (PartyRole.ALICE, PartyRole.BOB):
            raise InvalidArgumentError("the announcer must be Alice or Bob")
        if self.hemisphere not in (1, -1):
            raise InvalidArgumentError("hemisphere must be +1 or -1")
        if self.retries < 0:
            raise InvalidArgumentError("retries must be >= 0")
        if self.k_test and self.k_test < 30:
            raise InvalidArgumentError("k_test must be 0 (no detection) or at least 30")
        if not 0.0 < self.alpha < 1.0:
            raise InvalidArgumentError("alpha must lie in (0, 1)")
        if self.method == "2d" and abs(float(np.dot(self.axis, self.frame[2]))) > 1e-9:
            raise InvalidArgumentError("2d sessions need the axis in the plane orthogonal to the agreed z axis")

    @property
    def estimator(self) -> PartyRole:
        return PartyRole.BOB if self.announcer is PartyRole.ALICE else PartyRole.ALICE

    @property
    def scenario(self) -> Scenario:
        return self.attack.scenario

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "n": self.n,
            "axis": list(self.axis),
            "frame": [list(r) for r in self.frame],
            "seed": self.seed,
            "announcer": self.announcer.value,
            "hemisphere": self.hemisphere,
            "retries": self.retries,
            "k_test": self.k_test,
            "alpha": self.alpha,
            "attack": {
                "scenario": self.attack.scenario.value,
                "fraction": self.attack.fraction,
                "eve_frame": [list(r) for r in self.attack.eve_frame],
            },
        }

    @classmethod
    def from_json(cls, data: dict) -> "SessionConfig":
        data = dict(data)
        att = data.pop("attack")
        attack = AttackConfig(Scenario(att["scenario"]), att["fraction"], att["eve_frame"])
        data["announcer"] = PartyRole(data["announcer"])
        return cls(attack=attack, **data)

    def session_id(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _estimate_to_json(est: Optional[DirectionEstimate]):
    if est is None:
        return None
    m = None if est.m_e is None else [est.m_e.x, est.m_e.y, est.m_e.z]
    return {
        "m_e": m,
        "cos": list(est.cos_theta_e),
        "method": est.method,
        "admissible": est.admissible,
        "degenerate": est.degenerate,
    }


def _estimate_from_json(data) -> Optional[DirectionEstimate]:
    if data is None:
        return None
    m = None if data["m_e"] is None else Direction(*data["m_e"])
    return DirectionEstimate(m, tuple(data["cos"]), data["method"], data["admissible"], data["degenerate"])


def _stats_to_json(stats):
    return None if stats is None else [[s.n, s.n_d, s.n_pp, s.n_pm, s.n_mp, s.n_mm] for s in stats]


def _stats_from_json(data):
    return None if data is None else tuple(CorrelationStat(*row) for row in data)


@dataclass(frozen=True)
class ProtocolTranscript:
    """Ordered message log plus the simulator-side outcome of one session.

    ``estimate`` and ``stats`` belong to the estimating party (Bob by
    default) and are expressed in that party's frame; ``eve_estimate`` is in
    Eve's frame.
    """

    session_id: str
    config: SessionConfig
    messages: tuple
    estimate: Optional[DirectionEstimate] = None
    stats: Optional[tuple] = None
    rounds: int = 1
    verdict: Verdict = Verdict.NOT_RUN
    p_value: Optional[float] = None
    eve_estimate: Optional[DirectionEstimate] = None
    eve_stats: Optional[tuple] = None

    @property
    def scenario(self) -> Scenario:
        return self.config.scenario

    @property
    def estimate_world(self) -> Optional[np.ndarray]:
        """The estimate expressed in simulator (world) coordinates."""
        if self.estimate is None or self.estimate.m_e is None:
            return None
        return np.asarray(self.config.frame).T @ self.estimate.m_e.vector

    def announcements(self, include_tests: bool = True) -> list:
        out = [m for m in self.messages if m.kind is MessageKind.ANNOUNCE_RESULTS]
        return out if include_tests else out[: self.rounds]

    def serialize(self) -> str:
        result = {
            "session": self.session_id,
            "estimate": _estimate_to_json(self.estimate),
            "stats": _stats_to_json(self.stats),
            "rounds": self.rounds,
            "verdict": self.verdict.value,
            "p_value": self.p_value,
            "eve_estimate": _estimate_to_json(self.eve_estimate),
            "eve_stats": _stats_to_json(self.eve_stats),
        }
        lines = [
            FORMAT_LINE,
            "# config " + json.dumps(self.config.to_json(), sort_keys=True),
            "# result " + json.dumps(result, sort_keys=True),
        ]
        lines.extend(m.to_line() for m in self.messages)
        return "\n".join(lines) + "\n"

    @classmethod
    def deserialize(cls, text: str) -> "ProtocolTranscript":
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if len(lines) < 3 or lines[0] != FORMAT_LINE:
            raise TranscriptError("missing transcript header")
        if not lines[1].startswith("# config ") or not lines[2].startswith("# result "):
            raise TranscriptError("malformed transcript header")
        try:
            config = SessionConfig.from_json(json.loads(lines[1][len("# config "):]))
            result = json.loads(lines[2][len("# result "):])
        except (ValueError, KeyError, TypeError) as exc:
            raise TranscriptError(f"bad header: {exc}") from None
        messages = tuple(Message.from_line(line, i + 1) for i, line in enumerate(lines[3:], start=3))
        transcript = cls(
            session_id=result["session"],
            config=config,
            messages=messages,
            estimate=_estimate_from_json(result["estimate"]),
            stats=_stats_from_json(result["stats"]),
            rounds=result["rounds"],
            verdict=Verdict(result["verdict"]),
            p_value=result["p_value"],
            eve_estimate=_estimate_from_json(result["eve_estimate"]),
            eve_stats=_stats_from_json(result["eve_stats"]),
        )
        validate_transcript(transcript)
        return transcript


def validate_transcript(transcript: ProtocolTranscript) -> None:
    """Reject logs with out-of-order sequence numbers or more than one announcing party."""
    last = -1
    announcers = set()
    for msg in transcript.messages:
        if msg.seq <= last:
            raise TranscriptError(f"sequence numbers not strictly increasing at seq {msg.seq}")
        last = msg.seq
        if msg.kind is MessageKind.ANNOUNCE_RESULTS:
            announcers.add(msg.sender)
            if any(v not in (1, -1) for v in msg.payload):
                raise TranscriptError(f"announcement at seq {msg.seq} holds non +/-1 values")
    if len(announcers) > 1:
        raise TranscriptError(f"results announced by more than one party: {sorted(r.value for r in announcers)}")
    if transcript.config.method == METHOD_2D and transcript.rounds > 1:
        raise TranscriptError("2d sessions never retry")
