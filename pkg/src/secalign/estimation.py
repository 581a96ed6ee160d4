"""
Correlation statistics and Bayesian direction estimators.

Sign convention: a discordant pair (a_i != b_i) counts +1, so a singlet
measured along parallel axes gives q -> +1 and, in general, <q> = cos(theta)
with theta the angle between the two measurement axes.

The array helpers (``shrunk_cosine``, ``method_a_directions``, ...) take
integer discordance counts and broadcast, so Monte Carlo code can push whole
batches of trials through the same arithmetic as the scalar estimators.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln, xlogy

from .errors import DegenerateFrameError, InvalidArgumentError
from .quantum import Direction, OutcomeRecord, X, Z, as_axis_array

METHOD_2D = "2d"
METHOD_A = "a"
METHOD_B = "b"
METHODS = (METHOD_2D, METHOD_A, METHOD_B)

# Bob's measurement schedule per method, as indices into his frame (x, y, z).
BLOCK_AXES = {METHOD_2D: (0,), METHOD_A: (0, 1, 2), METHOD_B: (0, 1)}


def check_method(method: str) -> str:
    method = str(method).lower()
    if method not in METHODS:
        raise InvalidArgumentError(f"unknown method {method!r}; expected one of {METHODS}")
    return method


@dataclass(frozen=True)
class CorrelationStat:
    """Outcome counts for one block of N pairs.

    Only the integer counts are stored; ``q`` is always derived from them.
    The four-way counts are optional (``None``) when a stat is built from a
    bare discordance count.
    """

    n: int
    n_d: int
    n_pp: Optional[int] = None
    n_pm: Optional[int] = None
    n_mp: Optional[int] = None
    n_mm: Optional[int] = None

    def __post_init__(self):
        if self.n < 1 or not 0 <= self.n_d <= self.n:
            raise InvalidArgumentError(f"invalid counts n={self.n}, n_d={self.n_d}")
        four = (self.n_pp, self.n_pm, self.n_mp, self.n_mm)
        if any(c is not None for c in four):
            if any(c is None or c < 0 for c in four):
                raise InvalidArgumentError("four-way counts must all be given and non-negative")
            if self.n_pm + self.n_mp != self.n_d or self.n_pp + self.n_mm != self.n - self.n_d:
                raise InvalidArgumentError("four-way counts inconsistent with n and n_d")

    @classmethod
    def from_counts(cls, n_pp: int, n_pm: int, n_mp: int, n_mm: int) -> "CorrelationStat":
        return cls(n_pp + n_pm + n_mp + n_mm, n_pm + n_mp, n_pp, n_pm, n_mp, n_mm)

    @property
    def n_s(self) -> int:
        return self.n - self.n_d

    @property
    def q(self) -> float:
        return (self.n_d - self.n_s) / self.n


def correlation(record: OutcomeRecord) -> CorrelationStat:
    if record is None or len(record) == 0:
        raise InvalidArgumentError("empty record")
    a = record.a
    b = record.b
    n_pp = int(np.count_nonzero((a == 1) & (b == 1)))
    n_pm = int(np.count_nonzero((a == 1) & (b == -1)))
    n_mp = int(np.count_nonzero((a == -1) & (b == 1)))
    n_mm = int(np.count_nonzero((a == -1) & (b == -1)))
    return CorrelationStat.from_counts(n_pp, n_pm, n_mp, n_mm)


def shrunk_cosine(n_d, n):
    """Posterior-mean cosine N q / (N + 2) = (2 N_d - N) / (N + 2)."""
    n_d = np.asarray(n_d)
    return (2 * n_d - n) / (n + 2)


def estimate_cos_angle(stat: CorrelationStat) -> float:
    return float(shrunk_cosine(stat.n_d, stat.n))


def log_binomial_pmf(n_d, n, p):
    """log of C(n, n_d) p^n_d (1-p)^(n-n_d), evaluated in log space."""
    n_d = np.asarray(n_d, dtype=float)
    p = np.asarray(p, dtype=float)
    log_c = gammaln(n + 1) - gammaln(n_d + 1) - gammaln(n - n_d + 1)
    return log_c + xlogy(n_d, p) + xlogy(n - n_d, 1.0 - p)


def discordance_pmf(n: int, p_discordant) -> np.ndarray:
    """P(N_d = k) for k = 0..n; shape ``p_discordant.shape + (n + 1,)``."""
    k = np.arange(n + 1)
    p = np.asarray(p_discordant, dtype=float)[..., None]
    return np.exp(log_binomial_pmf(k, n, p))


def likelihood(n_d, n: int, theta) -> np.ndarray:
    """Probability of ``n_d`` discordant pairs out of ``n`` at axis angle ``theta``."""
    n_d_arr = np.asarray(n_d)
    if np.any(n_d_arr < 0) or np.any(n_d_arr > n) or np.any(n_d_arr != np.floor(n_d_arr)):
        raise InvalidArgumentError(f"n_d must be an integer in [0, {n}]")
    p = np.cos(np.asarray(theta, dtype=float) / 2) ** 2
    return np.exp(log_binomial_pmf(n_d_arr, n, p))


def posterior_density(n_d: int, n: int, axis=Z) -> Callable:
    """Posterior over Alice's direction w.r.t. the uniform sphere measure.

    Returns a function of a unit vector (or an array of them, trailing dim 3)
    giving (N+1)!/(N_d!(N-N_d)!) cos^(2N_d)(theta/2) sin^(2(N-N_d))(theta/2),
    where theta is the angle to ``axis``.
    """
    if not 0 <= n_d <= n:
        raise InvalidArgumentError(f"n_d must lie in [0, {n}]")
    ref = as_axis_array(axis)
    log_norm = gammaln(n + 2) - gammaln(n_d + 1) - gammaln(n - n_d + 1)

    def density(m):
        m = m.vector if isinstance(m, Direction) else np.asarray(m, dtype=float)
        c = np.clip(m @ ref, -1.0, 1.0)
        logp = log_norm + xlogy(n_d, (1 + c) / 2) + xlogy(n - n_d, (1 - c) / 2)
        return np.exp(logp)

    return density


def planar_posterior_mean_cos(n_d: int, n: int, nodes: int = 256) -> float:
    """Mean of cos(phi) under the posterior proportional to the likelihood on phi in [0, pi]."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    phi = (x + 1) * (math.pi / 2)
    logl = log_binomial_pmf(n_d, n, np.cos(phi / 2) ** 2)
    weights = w * np.exp(logl - logl.max())
    return float(np.sum(weights * np.cos(phi)) / np.sum(weights))


@dataclass(frozen=True)
class DirectionEstimate:
    """Result of one estimator call, in the estimating party's frame."""

    m_e: Optional[Direction]
    cos_theta_e: tuple
    method: str
    admissible: bool = True
    degenerate: bool = False

    @property
    def ok(self) -> bool:
        return self.m_e is not None


def planar_angle(cos_e, sin_sign=1):
    return np.where(np.asarray(sin_sign) < 0, -1.0, 1.0) * np.arccos(np.clip(cos_e, -1.0, 1.0))


def estimate_2d(
    stat: CorrelationStat,
    stat_perp: Optional[CorrelationStat] = None,
    reference=X,
    normal=Z,
    posterior: str = "sphere",
) -> DirectionEstimate:
    """Estimate an in-plane direction from its correlation with ``reference``.

    The cosine of the in-plane angle is the shrunk correlation N q / (N + 2)
    (``posterior="sphere"``, the rule whose average fidelity has the closed
    form in ``fidelity_2d_exact``) or the mean under a uniform prior on the
    half circle (``posterior="planar"``). The angle lies in [0, pi] unless
    ``stat_perp``, a correlation along ``normal x reference``, fixes the sign.
    """
    if posterior == "sphere":
        cos_e = estimate_cos_angle(stat)
    elif posterior == "planar":
        cos_e = planar_posterior_mean_cos(stat.n_d, stat.n)
    else:
        raise InvalidArgumentError(f"unknown posterior {posterior!r}")
    sign = 1
    if stat_perp is not None and stat_perp.q < 0:
        sign = -1
    phi_e = float(planar_angle(cos_e, sign))
    ref = as_axis_array(reference)
    perp = np.cross(as_axis_array(normal), ref)
    m_e = Direction.from_vector(math.cos(phi_e) * ref + math.sin(phi_e) * perp)
    return DirectionEstimate(m_e, (cos_e,), METHOD_2D)


def method_a_directions(n_dx, n_dy, n_dz, n):
    """Normalised correlation triples; returns (unit vectors, degenerate mask)."""
    c = np.stack([shrunk_cosine(n_dx, n), shrunk_cosine(n_dy, n), shrunk_cosine(n_dz, n)], axis=-1)
    norm = np.linalg.norm(c, axis=-1)
    degenerate = norm == 0
    safe = np.where(degenerate, 1.0, norm)
    return c / safe[..., None], degenerate


def estimate_method_a(stat_x: CorrelationStat, stat_y: CorrelationStat, stat_z: CorrelationStat) -> DirectionEstimate:
    """m_e = (q_x, q_y, q_z) / |(q_x, q_y, q_z)|.

    The normalisation removes the common N/(N+2) factor, so shrinking first
    changes nothing when the three blocks have equal size. An all-zero
    triple is returned with ``degenerate=True`` and ``m_e=None``.
    """
    cos = tuple(estimate_cos_angle(s) for s in (stat_x, stat_y, stat_z))
    if all(c == 0 for c in cos):
        return DirectionEstimate(None, cos, METHOD_A, admissible=True, degenerate=True)
    return DirectionEstimate(Direction.from_vector(cos), cos, METHOD_A)


def method_b_directions(n_dx, n_dy, n, hemisphere=1):
    """Returns (vectors, admissible mask); inadmissible rows hold NaN."""
    cx = shrunk_cosine(n_dx, n)
    cy = shrunk_cosine(n_dy, n)
    r2 = cx * cx + cy * cy
    admissible = r2 <= 1.0
    cz = np.sqrt(np.where(admissible, 1.0 - r2, np.nan))
    sign = 1.0 if hemisphere >= 0 else -1.0
    vecs = np.stack(np.broadcast_arrays(cx, cy, sign * cz), axis=-1).astype(float)
    return np.where(admissible[..., None], vecs, np.nan), admissible


def estimate_method_b(stat_x: CorrelationStat, stat_y: CorrelationStat, hemisphere: int = 1) -> DirectionEstimate:
    if hemisphere not in (1, -1):
        raise InvalidArgumentError("hemisphere must be +1 or -1")
    cx = estimate_cos_angle(stat_x)
    cy = estimate_cos_angle(stat_y)
    r2 = cx * cx + cy * cy
    if r2 > 1.0:
        return DirectionEstimate(None, (cx, cy), METHOD_B, admissible=False)
    cz = hemisphere * math.sqrt(1.0 - r2)
    # cx, cy, cz already have unit norm up to rounding; from_vector removes the residue.
    return DirectionEstimate(Direction.from_vector((cx, cy, cz)), (cx, cy, cz), METHOD_B)


def fidelity(m, m_e) -> float:
    """(1 + m.m_e) / 2 for two unit vectors."""
    a = as_axis_array(m)
    b = as_axis_array(m_e)
    if not (np.isclose(np.linalg.norm(a), 1.0, atol=1e-9) and np.isclose(np.linalg.norm(b), 1.0, atol=1e-9)):
        raise InvalidArgumentError("fidelity needs unit vectors")
    return float(np.clip((1.0 + a @ b) / 2, 0.0, 1.0))


@dataclass(frozen=True)
class Frame:
    """Right-handed orthonormal frame; ``matrix`` rows are the x, y, z axes."""

    matrix: np.ndarray

    @property
    def x(self) -> Direction:
        return Direction.from_vector(self.matrix[0])

    @property
    def y(self) -> Direction:
        return Direction.from_vector(self.matrix[1])

    @property
    def z(self) -> Direction:
        return Direction.from_vector(self.matrix[2])


def _as_vector(est) -> np.ndarray:
    if isinstance(est, DirectionEstimate):
        if est.m_e is None:
            raise DegenerateFrameError("estimate carries no direction")
        est = est.m_e
    return np.asarray(as_axis_array(est), dtype=float)


def align_frame(z_estimate, x_estimate, tol: float = 1e-6) -> Frame:
    """Build Alice's frame from estimates of her z and x axes (Gram-Schmidt on x)."""
    z = _as_vector(z_estimate)
    z = z / np.linalg.norm(z)
    x = _as_vector(x_estimate)
    x = x - (x @ z) * z
    norm = np.linalg.norm(x)
    if norm < tol:
        raise DegenerateFrameError("axis estimates are (nearly) parallel")
    x = x / norm
    y = np.cross(z, x)
    return Frame(np.stack([x, y, z]))
