"""
Dense state-vector engine for the two- and three-qubit states used by the
alignment protocol.

Conventions:
- |0>, |1> are the +1 / -1 eigenvectors of sigma_z; basis order is
  lexicographic (|00>, |01>, |10>, |11> for two qubits).
- Measuring a qubit along a unit axis n uses the projectors (I +/- n.sigma)/2.
- Outcome index 0 is +1 and index 1 is -1 everywhere.
- Sampling uses numpy's PCG64 (``np.random.default_rng``), so records are
  reproducible for a given integer seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import InvalidArgumentError, InvalidStateError

NORM_TOL = 1e-12

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = np.stack([PAULI_X, PAULI_Y, PAULI_Z])


@dataclass(frozen=True)
class Direction:
    """A unit vector. ``from_angles`` and ``from_vector`` build one from other data."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        norm = math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)
        if not math.isfinite(norm) or abs(norm - 1.0) > NORM_TOL:
            raise InvalidArgumentError(f"direction is not a unit vector (norm {norm!r})")

    @classmethod
    def from_angles(cls, theta: float, phi: float) -> "Direction":
        s = math.sin(theta)
        return cls.from_vector((s * math.cos(phi), s * math.sin(phi), math.cos(theta)))

    @classmethod
    def from_vector(cls, v) -> "Direction":
        v = np.asarray(v, dtype=float).reshape(3)
        norm = float(np.linalg.norm(v))
        if norm == 0.0 or not math.isfinite(norm):
            raise InvalidArgumentError("cannot normalise a zero or non-finite vector")
        v = v / norm
        return cls(float(v[0]), float(v[1]), float(v[2]))

    @property
    def theta(self) -> float:
        return math.atan2(math.hypot(self.x, self.y), self.z)

    @property
    def phi(self) -> float:
        return math.atan2(self.y, self.x) % (2 * math.pi)

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def dot(self, other: "Direction") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def __neg__(self) -> "Direction":
        return Direction(-self.x, -self.y, -self.z)

    def rotated(self, rotation) -> "Direction":
        return Direction.from_vector(np.asarray(rotation) @ self.vector)


X = Direction(1.0, 0.0, 0.0)
Y = Direction(0.0, 1.0, 0.0)
Z = Direction(0.0, 0.0, 1.0)

AxisLike = Union[Direction, Sequence[float], np.ndarray]


def as_axis_array(axis) -> np.ndarray:
    """Return ``axis`` as a float array with trailing dimension 3."""
    if isinstance(axis, Direction):
        return axis.vector
    arr = np.asarray(axis, dtype=float)
    if arr.shape[-1:] != (3,):
        raise InvalidArgumentError(f"axis must have trailing dimension 3, got shape {arr.shape}")
    if not np.allclose(np.linalg.norm(arr, axis=-1), 1.0, atol=1e-9, rtol=0):
        raise InvalidArgumentError("measurement axes must be unit vectors")
    return arr


@dataclass(frozen=True, eq=False)
class PureState:
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size not in (2, 4, 8):
            raise InvalidStateError(f"state must hold 1 to 3 qubits, got {amps.size} amplitudes")
        norm2 = float(np.vdot(amps, amps).real)
        if abs(norm2 - 1.0) > NORM_TOL:
            raise InvalidStateError(f"state is not normalised (squared norm {norm2!r})")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n_qubits(self) -> int:
        return int(self.amplitudes.size).bit_length() - 1

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.n_qubits)

    def permute(self, order: Sequence[int]) -> "PureState":
        """Relabel qubits so that new qubit ``i`` is old qubit ``order[i]``."""
        return PureState(np.transpose(self.tensor(), tuple(order)).reshape(-1))

    def __eq__(self, other):
        return isinstance(other, PureState) and np.array_equal(self.amplitudes, other.amplitudes)

    def __hash__(self):
        return hash(self.amplitudes.tobytes())


def _coerce_state(state) -> PureState:
    return state if isinstance(state, PureState) else PureState(state)


@dataclass(frozen=True)
class JointDistribution:
    p_pp: float
    p_pm: float
    p_mp: float
    p_mm: float

    def __post_init__(self):
        probs = self.as_array()
        if np.any(probs < -NORM_TOL) or np.any(probs > 1 + NORM_TOL):
            raise InvalidArgumentError(f"probabilities out of range: {probs}")
        if abs(math.fsum(probs) - 1.0) > NORM_TOL:
            raise InvalidArgumentError(f"probabilities sum to {math.fsum(probs)!r}")

    @classmethod
    def from_array(cls, probs) -> "JointDistribution":
        p = np.clip(np.asarray(probs, dtype=float).reshape(4), 0.0, 1.0)
        return cls(*(float(v) for v in p))

    def as_array(self) -> np.ndarray:
        return np.array([self.p_pp, self.p_pm, self.p_mp, self.p_mm])

    @property
    def p_discordant(self) -> float:
        return self.p_pm + self.p_mp


@dataclass(frozen=True, eq=False)
class OutcomeRecord:
    """Paired +/-1 outcomes; ``a`` is Alice's sequence, ``b`` Bob's."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=np.int8).reshape(-1)
        b = np.array(self.b, dtype=np.int8).reshape(-1)
        if a.size == 0 or a.size != b.size:
            raise InvalidArgumentError(f"record sequences must be non-empty and equal length ({a.size} vs {b.size})")
        if not (np.all(np.abs(a) == 1) and np.all(np.abs(b) == 1)):
            raise InvalidArgumentError("record entries must be +1 or -1")
        a.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    def __len__(self):
        return int(self.a.size)

    def __eq__(self, other):
        return (
            isinstance(other, OutcomeRecord)
            and np.array_equal(self.a, other.a)
            and np.array_equal(self.b, other.b)
        )


def singlet_state() -> PureState:
    r = 1 / math.sqrt(2)
    return PureState([0, r, -r, 0])


def ghz_state() -> PureState:
    amps = np.zeros(8, dtype=complex)
    amps[0] = amps[7] = 1 / math.sqrt(2)
    return PureState(amps)


def projectors(axes) -> np.ndarray:
    """Projectors (I + s n.sigma)/2 for s = +1, -1; shape ``axes.shape[:-1] + (2, 2, 2)``."""
    n = as_axis_array(axes)
    n_sigma = np.einsum("...k,kij->...ij", n, PAULI)
    eye = np.eye(2, dtype=complex)
    return 0.5 * np.stack([eye + n_sigma, eye - n_sigma], axis=-3)


_LETTERS = "abcdefghijklmnopqrstuvw"


def outcome_probabilities(state, axes) -> np.ndarray:
    """Born-rule joint probabilities for measuring every qubit.

    ``axes`` has shape ``(..., k, 3)`` (one axis per qubit, optional batch
    dimensions). The result has shape ``(..., 2, ..., 2)`` with one outcome
    index per qubit.
    """
    state = _coerce_state(state)
    k = state.n_qubits
    proj = projectors(axes)
    if proj.shape[-4] != k:
        raise InvalidArgumentError(f"need {k} axes for a {k}-qubit state, got {proj.shape[-4]}")
    bra = _LETTERS[:k]
    ket = _LETTERS[k:2 * k]
    out = _LETTERS[2 * k:3 * k]
    operands = [state.tensor().conj()]
    terms = [bra]
    for q in range(k):
        operands.append(proj[..., q, :, :, :])
        terms.append("..." + out[q] + bra[q] + ket[q])
    operands.append(state.tensor())
    terms.append(ket)
    expr = ",".join(terms) + "->..." + out
    probs = np.einsum(expr, *operands, optimize=True).real
    return np.clip(probs, 0.0, 1.0)


def pair_probabilities(state, axes_a, axes_b) -> np.ndarray:
    """Batched two-qubit outcome probabilities ordered (++, +-, -+, --)."""
    a = as_axis_array(axes_a)
    b = as_axis_array(axes_b)
    a, b = np.broadcast_arrays(a, b)
    probs = outcome_probabilities(state, np.stack([a, b], axis=-2))
    return probs.reshape(probs.shape[:-2] + (4,))


def joint_distribution(state, axis_a: AxisLike, axis_b: AxisLike) -> JointDistribution:
    state = _coerce_state(state)
    if state.n_qubits != 2:
        raise InvalidStateError("joint_distribution expects a two-qubit state")
    return JointDistribution.from_array(pair_probabilities(state, axis_a, axis_b))


def marginal_pair_distribution(state, party_pair: Sequence[int], axis_a: AxisLike, axis_b: AxisLike) -> JointDistribution:
    """Two-party outcome distribution of a three-qubit state, summed over the third party."""
    state = _coerce_state(state)
    if state.n_qubits != 3:
        raise InvalidStateError("marginal_pair_distribution expects a three-qubit state")
    i, j = (int(p) for p in party_pair)
    if i == j or not (0 <= i < 3 and 0 <= j < 3):
        raise InvalidArgumentError(f"invalid party pair {tuple(party_pair)!r}")
    (other,) = {0, 1, 2} - {i, j}
    axes = np.zeros((3, 3))
    axes[i] = as_axis_array(axis_a)
    axes[j] = as_axis_array(axis_b)
    axes[other] = Z.vector  # any axis: the sum over its outcomes is basis independent
    probs = outcome_probabilities(state, axes)
    marginal = probs.sum(axis=other)
    if i > j:
        marginal = marginal.T
    return JointDistribution.from_array(marginal.reshape(4))


def outcome_indices(probs, u) -> np.ndarray:
    """Map uniforms ``u`` in [0, 1) to outcome indices by inverse CDF over the last axis of ``probs``."""
    cdf = np.cumsum(probs, axis=-1)
    idx = (np.asarray(u)[..., None] >= cdf[..., :-1]).sum(axis=-1)
    return idx.astype(np.int64)


def records_from_indices(idx) -> tuple[np.ndarray, np.ndarray]:
    idx = np.asarray(idx)
    a = np.where(idx < 2, 1, -1).astype(np.int8)
    b = np.where(idx % 2 == 0, 1, -1).astype(np.int8)
    return a, b


def sample_record(dist: JointDistribution, n: int, seed) -> OutcomeRecord:
    """Draw ``n`` independent outcome pairs from ``dist``.

    ``seed`` is anything ``np.random.default_rng`` accepts (an int, a
    ``SeedSequence`` or a ``Generator``).
    """
    if int(n) < 1:
        raise InvalidArgumentError(f"need at least one pair, got n={n}")
    rng = np.random.default_rng(seed)
    u = rng.random(int(n))
    a, b = records_from_indices(outcome_indices(dist.as_array(), u))
    return OutcomeRecord(a, b)


def measure_qubit(states: np.ndarray, slot: int, axis, u) -> tuple[np.ndarray, np.ndarray]:
    """Projectively measure qubit ``slot`` of a batch of states and collapse them.

    ``states`` has shape (R, 2**k). Returns (+/-1 outcomes, post-measurement
    states). Outcome +1 is chosen when ``u < P(+1)``.
    """
    states = np.asarray(states, dtype=complex)
    rows, dim = states.shape
    k = dim.bit_length() - 1
    proj = projectors(axis)
    tensor = states.reshape((rows,) + (2,) * k)
    plus = np.moveaxis(np.tensordot(proj[0], tensor, axes=([1], [slot + 1])), 0, slot + 1)
    p_plus = np.clip(np.sum(np.abs(plus.reshape(rows, dim)) ** 2, axis=1), 0.0, 1.0)
    take_plus = np.asarray(u) < p_plus
    minus = tensor - plus
    chosen = np.where(take_plus.reshape((rows,) + (1,) * k), plus, minus).reshape(rows, dim)
    norms = np.sqrt(np.where(take_plus, p_plus, 1.0 - p_plus))
    safe = np.where(norms > 0, norms, 1.0)
    post = chosen / safe[:, None]
    return np.where(take_plus, 1, -1).astype(np.int8), post
