"""
Average-fidelity analytics: closed forms, sphere quadrature, admissibility
and Monte Carlo cross-checks.

Exact 3D averages use a product rule (Gauss-Legendre in cos(gamma), uniform
trapezoid in azimuth). The Method A integrand is a polynomial of degree
3N + 1 in the components of m, so the default 64 x 128 rule is exact up to
rounding for N <= 42; refinement by doubling both node counts is used as the
error estimate everywhere.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import AccuracyError, InvalidArgumentError
from .estimation import (
    METHOD_2D,
    METHOD_A,
    METHOD_B,
    check_method,
    discordance_pmf,
    method_a_directions,
    method_b_directions,
    shrunk_cosine,
)
from .quantum import X, Y, Z, pair_probabilities, singlet_state

DEFAULT_N_THETA = 64
DEFAULT_N_PHI = 128
DEFAULT_TOL = 1e-6
MIN_N_THETA = 4
MIN_N_PHI = 8

TABLE_COLUMNS = ("method", "N", "N_total", "N_eff", "fidelity", "error_bound", "p_admissible", "baseline")

PAIRS_PER_AXIS = {METHOD_2D: 1, METHOD_A: 3, METHOD_B: 2}


@dataclass(frozen=True)
class FidelityPoint:
    method: str
    n: int
    n_total: int
    f_mean: float
    error_bound: float
    n_eff: float
    p_admissible: float = 1.0
    source: str = "exact"
    f_unconditional: Optional[float] = None

    @property
    def baseline(self) -> float:
        return optimal_fidelity_baseline(self.n_total)

    def as_row(self) -> dict:
        tag = self.method if self.source == "exact" else f"{self.method}-{self.source}"
        return {
            "method": tag,
            "N": self.n,
            "N_total": self.n_total,
            "N_eff": self.n_eff,
            "fidelity": self.f_mean,
            "error_bound": self.error_bound,
            "p_admissible": self.p_admissible,
            "baseline": self.baseline,
        }


@dataclass(frozen=True)
class AdmissibilityReport:
    n: int
    p_admissible: float
    chebyshev_bound: float
    n_used: int
    n_eff: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "n_eff", self.n_used / self.p_admissible)


def optimal_fidelity_baseline(n_total: int) -> float:
    """(N + 1)/(N + 2): the best average fidelity with collective measurements."""
    if n_total < 1:
        raise InvalidArgumentError("n_total must be >= 1")
    return (n_total + 1) / (n_total + 2)


def _check_n(n: int) -> int:
    if int(n) != n or n < 1:
        raise InvalidArgumentError(f"n must be a positive integer, got {n!r}")
    return int(n)


def fidelity_2d_exact(n: int) -> FidelityPoint:
    n = _check_n(n)
    roots = [math.sqrt(max(0.0, 1.0 - ((2 * k - n) / (n + 2)) ** 2)) for k in range(n + 1)]
    f = 0.5 + n / (4 * (n + 2)) + math.fsum(roots) / (math.pi * (n + 1))
    return FidelityPoint(METHOD_2D, n, n, f, 4 * n * np.finfo(float).eps, float(n))


def sphere_nodes(n_theta: int = DEFAULT_N_THETA, n_phi: int = DEFAULT_N_PHI, hemisphere: int = 0):
    """Product-rule nodes on the sphere (or one hemisphere) with weights summing to 1."""
    if n_theta < MIN_N_THETA or n_phi < MIN_N_PHI:
        raise InvalidArgumentError(f"need at least {MIN_N_THETA} x {MIN_N_PHI} quadrature nodes")
    x, w = np.polynomial.legendre.leggauss(n_theta)
    if hemisphere:
        x = np.sign(hemisphere) * (x + 1) / 2
    w = w / w.sum()
    phi = np.arange(n_phi) * (2 * math.pi / n_phi)
    cos_g, az = np.meshgrid(x, phi, indexing="ij")
    sin_g = np.sqrt(1 - cos_g**2)
    points = np.stack([sin_g * np.cos(az), sin_g * np.sin(az), cos_g], axis=-1).reshape(-1, 3)
    weights = np.repeat(w / n_phi, n_phi)
    return points, weights


def _chunks(total: int, size: int):
    for start in range(0, total, size):
        yield slice(start, min(total, start + size))


def _method_a_integrand(n: int, points: np.ndarray) -> np.ndarray:
    """E[F | m] at each node, summing the factorised likelihood over all count triples."""
    k = np.arange(n + 1)
    nd = np.meshgrid(k, k, k, indexing="ij")
    dirs, _ = method_a_directions(*nd, n)  # degenerate triples give the zero vector, i.e. F = 1/2
    flat = [dirs[..., i].reshape((n + 1) ** 2, n + 1) for i in range(3)]
    out = np.empty(len(points))
    rows = max(1, 2_000_000 // (n + 1) ** 2)
    for sl in _chunks(len(points), rows):
        m = points[sl]
        px, py, pz = (discordance_pmf(n, (1 + m[:, i]) / 2) for i in range(3))
        dot = np.zeros(len(m))
        for i in range(3):
            t = (pz @ flat[i].T).reshape(len(m), n + 1, n + 1)
            dot += m[:, i] * np.einsum("ma,mb,mab->m", px, py, t)
        out[sl] = 0.5 * (1 + dot)
    return out


def _method_b_terms(n: int, points: np.ndarray, hemisphere: int):
    """Per-node admissible probability and E[m.m_e ; admissible]."""
    k = np.arange(n + 1)
    ndx, ndy = np.meshgrid(k, k, indexing="ij")
    vecs, adm = method_b_directions(ndx, ndy, n, hemisphere)
    vecs = np.where(adm[..., None], vecs, 0.0)
    adm = adm.astype(float)
    px, py = (discordance_pmf(n, (1 + points[:, i]) / 2) for i in range(2))
    p_adm = np.einsum("ma,mb,ab->m", px, py, adm)
    dot = np.zeros(len(points))
    for i in range(3):
        dot += points[:, i] * np.einsum("ma,mb,ab->m", px, py, vecs[..., i])
    return p_adm, dot


def _weighted_mean(weights, values) -> float:
    return math.fsum(np.asarray(weights) * np.asarray(values))


def _refined(evaluate, n_theta: int, n_phi: int, tol: float):
    coarse = evaluate(n_theta, n_phi)
    fine = evaluate(2 * n_theta, 2 * n_phi)
    diff = max(abs(np.asarray(fine, dtype=float) - np.asarray(coarse, dtype=float)).max(initial=0.0), 0.0)
    if diff > tol:
        raise AccuracyError(
            f"quadrature not converged: {n_theta}x{n_phi} and {2 * n_theta}x{2 * n_phi} nodes differ by {diff:.3g}"
        )
    return coarse, max(2 * diff, 1e-12)


def fidelity_3d_method_a(
    n: int, n_theta: int = DEFAULT_N_THETA, n_phi: int = DEFAULT_N_PHI, tol: float = DEFAULT_TOL
) -> FidelityPoint:
    n = _check_n(n)

    def evaluate(nt, nph):
        pts, wts = sphere_nodes(nt, nph)
        return _weighted_mean(wts, _method_a_integrand(n, pts))

    f, err = _refined(evaluate, n_theta, n_phi, tol)
    return FidelityPoint(METHOD_A, n, 3 * n, f, err, float(3 * n))


def fidelity_3d_method_b(
    n: int,
    hemisphere: int = 1,
    n_theta: int = DEFAULT_N_THETA,
    n_phi: int = DEFAULT_N_PHI,
    tol: float = DEFAULT_TOL,
) -> tuple[FidelityPoint, AdmissibilityReport]:
    """Method B average over the prior hemisphere.

    Inadmissible rounds are repeated with fresh pairs for the same m, so the
    fidelity at each m is conditioned on admissibility before averaging over
    the hemisphere. ``f_unconditional`` instead scores an inadmissible round
    as a random guess (fidelity 1/2) without repetition.
    """
    n = _check_n(n)
    if hemisphere not in (1, -1):
        raise InvalidArgumentError("hemisphere must be +1 or -1")

    def evaluate(nt, nph):
        pts, wts = sphere_nodes(nt, nph, hemisphere)
        p_adm, dot = _method_b_terms(n, pts, hemisphere)
        return (
            _weighted_mean(wts, 0.5 * (1 + dot / p_adm)),
            _weighted_mean(wts, p_adm),
            _weighted_mean(wts, 0.5 * (1 + dot)),
        )

    (f, p_adm, f_unc), err = _refined(evaluate, n_theta, n_phi, tol)
    report = AdmissibilityReport(n, p_adm, chebyshev_inadmissible_bound(n), 2 * n)
    point = FidelityPoint(METHOD_B, n, 2 * n, f, err, report.n_eff, p_adm, f_unconditional=f_unc)
    return point, report


def admissible_probability(n: int, cos_gamma=None, n_theta: int = DEFAULT_N_THETA, n_phi: int = DEFAULT_N_PHI):
    """Exact P(admissible) for Method B.

    With ``cos_gamma`` given, returns the probability for m at that polar angle
    averaged over azimuth; otherwise the hemisphere average.
    """
    n = _check_n(n)
    if cos_gamma is None:
        pts, wts = sphere_nodes(n_theta, n_phi, 1)
        p_adm, _ = _method_b_terms(n, pts, 1)
        return _weighted_mean(wts, p_adm)
    az = np.arange(n_phi) * (2 * math.pi / n_phi)
    s = math.sqrt(max(0.0, 1 - cos_gamma**2))
    pts = np.stack([s * np.cos(az), s * np.sin(az), np.full(n_phi, cos_gamma)], axis=-1)
    p_adm, _ = _method_b_terms(n, pts, 1)
    return float(p_adm.mean())


def inadmissible_probability_at(n: int, m) -> float:
    """Exact P(inadmissible | m) by summing the binomial law over the inadmissible region."""
    m = np.asarray(m, dtype=float).reshape(1, 3)
    p_adm, _ = _method_b_terms(_check_n(n), m, 1)
    return float(1.0 - p_adm[0])


def chebyshev_inadmissible_bound(n: int) -> float:
    """Hemisphere-averaged Markov/Chebyshev bound (N/(N+2))^2 (2/3 + 4/(3N)), capped at 1."""
    n = _check_n(n)
    return min(1.0, (n / (n + 2)) ** 2 * (2 / 3 + 4 / (3 * n)))


def chebyshev_inadmissible_bound_at(n: int, cos_gamma: float) -> float:
    """Per-angle bound (N/(N+2))^2 (1 - cos^2 g + (1 + cos^2 g)/N), capped at 1."""
    n = _check_n(n)
    c2 = cos_gamma * cos_gamma
    return min(1.0, (n / (n + 2)) ** 2 * (1 - c2 + (1 + c2) / n))


# --- Monte Carlo -----------------------------------------------------------


def _uniform_directions(rng, size: int, hemisphere: int = 0) -> np.ndarray:
    v = rng.standard_normal((size, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    if hemisphere:
        v[:, 2] = np.sign(hemisphere) * np.abs(v[:, 2])
    return v


def _discordant_counts(rng, n: int, m: np.ndarray, bob_axis) -> np.ndarray:
    """Simulate n singlet pairs per trial (Alice along m, Bob along bob_axis); return N_d."""
    probs = pair_probabilities(singlet_state(), m, np.broadcast_to(bob_axis.vector, m.shape))
    probs = probs / probs.sum(axis=-1, keepdims=True)
    counts = rng.multinomial(n, probs)
    return counts[:, 1] + counts[:, 2]


def _mc_chunk(method: str, n: int, size: int, rng, hemisphere: int, max_rounds: int):
    """Returns (fidelities, number admissible at first attempt)."""
    if method == METHOD_2D:
        phi = rng.uniform(0.0, math.pi, size)
        m = np.stack([np.cos(phi), np.sin(phi), np.zeros(size)], axis=1)
        cos_e = shrunk_cosine(_discordant_counts(rng, n, m, X), n)
        m_e = np.stack([cos_e, np.sqrt(1 - cos_e**2), np.zeros(size)], axis=1)
        return 0.5 * (1 + np.einsum("ij,ij->i", m, m_e)), size
    if method == METHOD_A:
        m = _uniform_directions(rng, size)
        nd = [_discordant_counts(rng, n, m, axis) for axis in (X, Y, Z)]
        dirs, _ = method_a_directions(*nd, n)
        return 0.5 * (1 + np.einsum("ij,ij->i", m, dirs)), size
    m = _uniform_directions(rng, size, hemisphere)
    f = np.empty(size)
    pending = np.arange(size)
    first_ok = None
    for _ in range(max_rounds):
        mp = m[pending]
        ndx = _discordant_counts(rng, n, mp, X)
        ndy = _discordant_counts(rng, n, mp, Y)
        dirs, adm = method_b_directions(ndx, ndy, n, hemisphere)
        if first_ok is None:
            first_ok = int(adm.sum())
        done = pending[adm]
        f[done] = 0.5 * (1 + np.einsum("ij,ij->i", mp[adm], dirs[adm]))
        pending = pending[~adm]
        if pending.size == 0:
            return f, first_ok
    raise AccuracyError(f"Monte Carlo retries did not terminate within {max_rounds} rounds")


def fidelity_monte_carlo(
    method: str,
    n: int,
    trials: int,
    seed,
    hemisphere: int = 1,
    chunk: int = 250_000,
    max_rounds: int = 10_000,
) -> FidelityPoint:
    """Stochastic estimate of the average fidelity.

    Directions are drawn uniformly from the half circle (2d), the sphere (a)
    or the ``hemisphere`` (b); each trial simulates singlet outcomes through
    the Born-rule engine and runs the matching estimator. ``error_bound`` is
    the standard error of the mean. Results depend only on (trials, seed,
    chunk).
    """
    method = check_method(method)
    n = _check_n(n)
    if trials < 1:
        raise InvalidArgumentError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    s1, s2, ok = [], [], 0
    for sl in _chunks(trials, chunk):
        f, first_ok = _mc_chunk(method, n, sl.stop - sl.start, rng, hemisphere, max_rounds)
        s1.append(math.fsum(f))
        s2.append(math.fsum(f * f))
        ok += first_ok
    mean = math.fsum(s1) / trials
    var = max(0.0, math.fsum(s2) / trials - mean * mean) * trials / max(1, trials - 1)
    se = math.sqrt(var / trials)
    p_adm = ok / trials
    n_total = PAIRS_PER_AXIS[method] * n
    n_eff = n_total / p_adm if p_adm > 0 else math.inf
    return FidelityPoint(method, n, n_total, mean, se, n_eff, p_adm, source="mc")


def admissible_fraction_monte_carlo(n: int, trials: int, seed, hemisphere: int = 1, chunk: int = 250_000):
    """Fraction of single Method B rounds that are admissible, with its standard error."""
    n = _check_n(n)
    rng = np.random.default_rng(seed)
    ok = 0
    for sl in _chunks(trials, chunk):
        m = _uniform_directions(rng, sl.stop - sl.start, hemisphere)
        _, adm = method_b_directions(_discordant_counts(rng, n, m, X), _discordant_counts(rng, n, m, Y), n, hemisphere)
        ok += int(adm.sum())
    p = ok / trials
    return p, math.sqrt(p * (1 - p) / trials)


def fidelity_exact(method: str, n: int, n_theta: int = DEFAULT_N_THETA, n_phi: int = DEFAULT_N_PHI, tol: float = DEFAULT_TOL, hemisphere: int = 1) -> FidelityPoint:
    method = check_method(method)
    if method == METHOD_2D:
        return fidelity_2d_exact(n)
    if method == METHOD_A:
        return fidelity_3d_method_a(n, n_theta, n_phi, tol)
    return fidelity_3d_method_b(n, hemisphere, n_theta, n_phi, tol)[0]
