import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from secalign.errors import AccuracyError, InvalidArgumentError
from secalign.fidelity import (
    TABLE_COLUMNS,
    admissible_fraction_monte_carlo,
    admissible_probability,
    chebyshev_inadmissible_bound,
    chebyshev_inadmissible_bound_at,
    fidelity_2d_exact,
    fidelity_3d_method_a,
    fidelity_3d_method_b,
    fidelity_exact,
    fidelity_monte_carlo,
    inadmissible_probability_at,
    optimal_fidelity_baseline,
    sphere_nodes,
)

# Reference values computed independently with scipy adaptive quadrature
# (quad / dblquad over the sphere) and scipy.stats.binom.
F_2D = {1: 0.8834387720523688, 2: 0.9148795938685276, 3: 0.9332633147202516, 10: 0.9741495516942529}
F_A = {1: 0.5 + 0.5 / math.sqrt(3), 2: 0.8533956235005947}
F_B = {1: 0.8315903870331603, 2: 0.8723961444739231, 5: 0.9212352945132746}
P_ADM_B5 = 0.9241071428571426
P_ADM_B15 = 0.914764036139455


@pytest.mark.parametrize("n", sorted(F_2D))
def test_2d_closed_form(n):
    assert fidelity_2d_exact(n).f_mean == pytest.approx(F_2D[n], abs=1e-13)


@pytest.mark.parametrize("n", sorted(F_A))
def test_method_a_quadrature(n):
    p = fidelity_3d_method_a(n)
    assert p.f_mean == pytest.approx(F_A[n], abs=1e-12)
    assert p.n_total == 3 * n and p.p_admissible == 1.0


@pytest.mark.parametrize("n", sorted(F_B))
def test_method_b_quadrature(n):
    point, report = fidelity_3d_method_b(n)
    assert point.f_mean == pytest.approx(F_B[n], abs=1e-12)
    assert report.n_used == 2 * n
    assert point.n_eff == pytest.approx(2 * n / point.p_admissible)


def test_method_b_admissibility_values():
    assert fidelity_3d_method_b(5)[0].p_admissible == pytest.approx(P_ADM_B5, abs=1e-12)
    assert admissible_probability(15) == pytest.approx(P_ADM_B15, abs=1e-12)
    assert admissible_probability(1) == pytest.approx(1.0)


def test_method_b_lower_hemisphere_is_mirror_image():
    up, _ = fidelity_3d_method_b(3, hemisphere=1)
    down, _ = fidelity_3d_method_b(3, hemisphere=-1)
    assert up.f_mean == pytest.approx(down.f_mean, abs=1e-13)


def test_method_b_unconditional_score_is_lower():
    point, _ = fidelity_3d_method_b(8)
    assert point.f_unconditional < point.f_mean


def test_sphere_nodes_integrate_polynomials():
    pts, w = sphere_nodes(16, 32)
    assert w.sum() == pytest.approx(1.0)
    assert w @ pts[:, 2] ** 2 == pytest.approx(1 / 3)
    assert w @ (pts[:, 0] ** 2 * pts[:, 1] ** 2) == pytest.approx(1 / 15)
    hp, hw = sphere_nodes(16, 32, hemisphere=1)
    assert (hp[:, 2] >= 0).all() and hw @ hp[:, 2] == pytest.approx(0.5)
    with pytest.raises(InvalidArgumentError):
        sphere_nodes(2, 4)


def test_quadrature_error_is_reported():
    p = fidelity_3d_method_a(6, n_theta=4, n_phi=8, tol=1.0)
    assert p.error_bound > 1e-12
    assert abs(p.f_mean - fidelity_3d_method_a(6).f_mean) <= p.error_bound
    with pytest.raises(AccuracyError):
        fidelity_3d_method_a(6, n_theta=4, n_phi=8, tol=1e-12)


def test_baseline():
    assert optimal_fidelity_baseline(6) == 0.875
    with pytest.raises(InvalidArgumentError):
        optimal_fidelity_baseline(0)


def test_method_a_stays_below_collective_baseline():
    for n in range(1, 11):
        p = fidelity_3d_method_a(n)
        assert p.f_mean < p.baseline


def test_method_b_beats_a_at_comparable_pair_counts():
    # fewer effective pairs and still higher fidelity for small N
    for n in range(1, 6):
        b = fidelity_3d_method_b(n)[0]
        n_a = math.ceil(b.n_eff / 3)
        assert b.f_mean > fidelity_3d_method_a(n_a).f_mean


@pytest.mark.parametrize("n", [2, 5, 15, 50])
def test_chebyshev_bounds_hold(n):
    assert 1 - admissible_probability(n) <= chebyshev_inadmissible_bound(n)
    for c in (0.0, 0.3, 0.7, 0.95, 1.0):
        m = (math.sqrt(1 - c * c), 0.0, c)
        assert inadmissible_probability_at(n, m) <= chebyshev_inadmissible_bound_at(n, c) + 1e-15


def test_chebyshev_limit():
    assert chebyshev_inadmissible_bound(10**9) == pytest.approx(2 / 3, abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 40), st.floats(0.0, 1.0))
def test_per_angle_bound_property(n, c):
    m = (math.sqrt(1 - c * c), 0.0, c)
    assert inadmissible_probability_at(n, m) <= chebyshev_inadmissible_bound_at(n, c) + 1e-12


def test_fidelity_exact_dispatch_and_rows():
    row = fidelity_exact("a", 2).as_row()
    assert tuple(row) == TABLE_COLUMNS
    assert row["baseline"] == 0.875
    with pytest.raises(InvalidArgumentError):
        fidelity_exact("c", 2)


def test_monte_carlo_is_seeded():
    a = fidelity_monte_carlo("b", 4, 20_000, seed=11)
    b = fidelity_monte_carlo("b", 4, 20_000, seed=11)
    assert a == b
    assert a.as_row()["method"] == "b-mc"


@pytest.mark.parametrize("method", ["2d", "a", "b"])
def test_monte_carlo_agrees_with_exact_small(method):
    mc = fidelity_monte_carlo(method, 3, 100_000, seed=5)
    exact = fidelity_exact(method, 3)
    assert abs(mc.f_mean - exact.f_mean) < 4 * mc.error_bound


def test_admissible_fraction_monte_carlo():
    p, se = admissible_fraction_monte_carlo(5, 100_000, seed=2)
    assert abs(p - P_ADM_B5) < 4 * se


@pytest.mark.slow
def test_monotone_in_n():
    for method in ("2d", "a", "b"):
        values = [fidelity_exact(method, n).f_mean for n in range(1, 31)]
        assert all(np.diff(values) > 0), method


@pytest.mark.parametrize("method", ["2d", "a", "b"])
def test_fidelities_beat_random_guessing(method):
    for n in (1, 2, 5, 12):
        assert fidelity_exact(method, n).f_mean > 0.5
