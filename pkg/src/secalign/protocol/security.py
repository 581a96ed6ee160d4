"""
Eavesdropper detection and information-leakage checks.

Detection: after alignment the two parties spend k extra pairs, the
announcer measuring along its axis m and the estimator along its estimate
m_e. For a genuine singlet each test pair is concordant with probability
(1 - m.m_e)/2. The estimator does not know m, so the null distribution of
the concordant count is the posterior predictive: a mixture over the
posterior of m (from the alignment counts) of Binomial(k, (1 - m.m_e)/2).
The test is two-sided at level ``alpha``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy import stats as sps

from ..estimation import METHOD_2D, METHOD_A, log_binomial_pmf
from ..fidelity import sphere_nodes
from ..quantum import outcome_probabilities, singlet_state
from .messages import ProtocolTranscript, Verdict

PLANAR_NODES = 2048
SPHERE_NODES = (128, 256)
_PRUNE = 1e-14


@lru_cache(maxsize=None)
def _grid(method: str, hemisphere: int):
    if method == METHOD_2D:
        x, w = np.polynomial.legendre.leggauss(PLANAR_NODES)
        phi = (x + 1) * (math.pi / 2)
        pts = np.stack([np.cos(phi), np.sin(phi), np.zeros_like(phi)], axis=1)
    else:
        pts, w = sphere_nodes(*SPHERE_NODES, hemisphere=0 if method == METHOD_A else hemisphere)
    pts.flags.writeable = False
    return pts, np.log(w)


def _posterior_nodes(method: str, stats, hemisphere: int):
    """Posterior over the announcer's axis, in the estimator's frame, on a quadrature grid."""
    pts, logw = _grid(method, hemisphere)
    if method == METHOD_2D:
        logw = logw + log_binomial_pmf(stats[0].n_d, stats[0].n, (1 + pts[:, 0]) / 2)
    else:
        for i, s in enumerate(stats):
            logw = logw + log_binomial_pmf(s.n_d, s.n, (1 + pts[:, i]) / 2)
    weights = np.exp(logw - logw.max())
    keep = weights > _PRUNE
    weights = weights[keep] / weights[keep].sum()
    return pts[keep], weights


def predictive_concordance_pmf(method: str, stats, m_e, k: int, hemisphere: int = 1) -> np.ndarray:
    """P(c concordant test pairs), c = 0..k, under the posterior predictive of an honest session."""
    pts, weights = _posterior_nodes(method, stats, hemisphere)
    p_conc = np.clip((1 - pts @ np.asarray(m_e, dtype=float)) / 2, 0.0, 1.0)
    c = np.arange(k + 1)
    pmf = weights @ np.exp(log_binomial_pmf(c[None, :], k, p_conc[:, None]))
    return pmf / pmf.sum()


def two_sided_p_value(pmf: np.ndarray, observed: int) -> float:
    lower = float(pmf[: observed + 1].sum())
    upper = float(pmf[observed:].sum())
    return min(1.0, 2 * min(lower, upper))


def detection_test(method, stats, m_e, concordant: int, k: int, alpha: float, hemisphere: int = 1):
    """Returns (verdict, p-value) for ``concordant`` agreeing outcomes among ``k`` test pairs."""
    pmf = predictive_concordance_pmf(method, stats, m_e, k, hemisphere)
    p = two_sided_p_value(pmf, concordant)
    return (Verdict.FAIL if p < alpha else Verdict.PASS), p


def announcer_marginal_deviation(axes_announcer, axes_estimator) -> float:
    """Largest |P(announcer sees +1) - 1/2| over the given axis pairs (batched Born rule)."""
    axes = np.stack(np.broadcast_arrays(np.asarray(axes_announcer, float), np.asarray(axes_estimator, float)), axis=-2)
    probs = outcome_probabilities(singlet_state(), axes)
    return float(np.max(np.abs(probs[..., 0, :].sum(axis=-1) - 0.5)))


@dataclass(frozen=True)
class LeakageReport:
    n_announced: int
    bias: float
    bias_bound: float
    marginal_deviation: float
    eve_fidelity: Optional[float] = None

    @property
    def announcement_looks_uniform(self) -> bool:
        return self.bias < self.bias_bound


def eve_information_leakage(transcript: ProtocolTranscript, n_axes: int = 64, seed: int = 0) -> LeakageReport:
    """What the public record, and Eve's private records if any, reveal about the announcer's axis.

    The announced bits' bias is compared to 3/sqrt(N). ``marginal_deviation``
    checks, over random axis pairs, that the announcer's outcome law does not
    depend on either axis, so the public bits carry no axis information.
    ``eve_fidelity`` is set when Eve produced her own estimate.
    """
    bits = np.concatenate([np.asarray(m.payload) for m in transcript.announcements(include_tests=False)])
    n = bits.size
    bias = abs(float(bits.mean())) if n else 0.0
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n_axes, 3))
    b = rng.standard_normal((n_axes, 3))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    b /= np.linalg.norm(b, axis=1, keepdims=True)
    deviation = announcer_marginal_deviation(a, b)
    eve_fid = None
    est = transcript.eve_estimate
    if est is not None and est.m_e is not None:
        m_world = np.asarray(transcript.config.attack.eve_frame).T @ est.m_e.vector
        eve_fid = float((1 + np.dot(transcript.config.axis, m_world)) / 2)
    return LeakageReport(n, bias, 3 / math.sqrt(n) if n else math.inf, deviation, eve_fid)


def _kgram_counts(bits, k: int) -> np.ndarray:
    bits = (np.asarray(bits).reshape(-1) > 0).astype(np.int64)
    usable = (bits.size // k) * k
    grams = bits[:usable].reshape(-1, k) @ (1 << np.arange(k)[::-1])
    return np.bincount(grams, minlength=2**k)


def kgram_chi_square(bits, k: int):
    """Chi-square test of non-overlapping k-grams of a +/-1 sequence against the uniform law."""
    return sps.chisquare(_kgram_counts(bits, k))


def announcement_uniformity_test(sequences: Sequence, max_k: int = 3, alpha: float = 0.01):
    """Pool announced sequences and run k-gram chi-square tests for k = 1..max_k.

    Each test runs at alpha / max_k (Bonferroni). Returns (passed, p-values).
    Grams never straddle two sequences.
    """
    p_values = []
    for k in range(1, max_k + 1):
        counts = sum(_kgram_counts(seq, k) for seq in sequences)
        p_values.append(float(sps.chisquare(counts).pvalue))
    return all(p >= alpha / max_k for p in p_values), p_values


def plugin_mutual_information(labels, symbols) -> float:
    """Plug-in estimate (bits) of I(label; symbol) from paired samples."""
    labels = np.asarray(labels).reshape(-1)
    symbols = np.asarray(symbols).reshape(-1)
    _, li = np.unique(labels, return_inverse=True)
    _, si = np.unique(symbols, return_inverse=True)
    joint = np.zeros((li.max() + 1, si.max() + 1))
    np.add.at(joint, (li, si), 1)
    joint /= joint.sum()
    pl = joint.sum(axis=1, keepdims=True)
    ps = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    return float(np.sum(joint[nz] * np.log2(joint[nz] / (pl @ ps)[nz])))
