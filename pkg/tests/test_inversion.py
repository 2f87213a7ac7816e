import math

import numpy as np
import pytest

from kdsqnm.errors import EmptyRegion, NearDegenerate, OutOfRange, SingularJacobian
from kdsqnm.inversion import (
    NewtonOptions,
    RectangleSpec,
    closed_form_seed,
    newton_invert_three,
    newton_invert_two,
    numeric_jacobian,
    p_matrix_rectangle_scan,
    stability_constants,
    stability_ratio,
    three_det_leading,
    two_mode_jacobian_analytic,
    unlabeled_invert,
)
from kdsqnm.kds_core import SpacetimeParams
from kdsqnm.photon_orbit import closed_form_coefficients
from kdsqnm.spectrum import (
    NoiseSpec,
    apply_noise,
    geometric_two_map,
    pseudopole_pair,
    three_map,
    two_mode_from_pair,
    two_mode_map,
    unlabeled_observables,
)

L = 0.04
W_PH = 0.8 / (3.0 * math.sqrt(3.0))


def geo2(Lambda):
    def f(x):
        return np.array(geometric_two_map(SpacetimeParams(x[0], x[1], Lambda)))
    return f


def test_seed_examples():
    s = closed_form_seed(W_PH, 0.0, L)
    assert s.M0 == pytest.approx(1.0, rel=1e-14) and s.a0 == 0.0
    s = closed_form_seed(0.1539601, 0.00437, L)
    assert s.M0 == pytest.approx(1.0, abs=1e-6)
    assert s.a0 == pytest.approx(0.05, abs=1e-4)
    s = closed_form_seed(1.0, 0.0, L)
    assert s.M0 == pytest.approx(1.0 / (3.0 * math.sqrt(3.04)), rel=1e-14)
    assert s.M0 == pytest.approx(0.1911798, abs=1e-7)
    assert 9 * L * s.M0 ** 2 == pytest.approx(0.01316, abs=1e-5)


def test_seed_out_of_range():
    # 9 Lambda M0^2 = 9 Lambda / (27 U^2 + 9 Lambda) < 1 whenever U != 0,
    # so only the degenerate U = Lambda = 0 input is rejected.
    s = closed_form_seed(1e-3, 0.0, L)
    assert 9 * L * s.M0 ** 2 < 1.0
    with pytest.raises(OutOfRange):
        closed_form_seed(0.0, 0.0, 0.0)


def test_round_trip_example():
    data = two_mode_map(SpacetimeParams(1.0, 0.05, L), 0, 100)
    for jac in ("fd", "analytic"):
        res = newton_invert_two(data, L, 100, 0, NewtonOptions(jacobian=jac))
        assert res.params.M == pytest.approx(1.0, abs=1e-10)
        assert res.params.a == pytest.approx(0.05, abs=1e-10)
        assert res.iterations <= 8
        assert res.final_residual <= 1e-12
        assert res.params.Lambda == L


def test_v_zero_recovers_axis_exactly():
    data = two_mode_map(SpacetimeParams(1.1, 0.0, L), 0, 100)
    res = newton_invert_two(data, L, 100)
    assert res.params.a == 0.0
    assert res.params.M == pytest.approx(1.1, abs=1e-10)


def test_round_trip_grid_5x5x3():
    worst = 0.0
    for lam in (0.01, 0.04, 0.07):
        for M in np.linspace(0.9, 1.1, 5):
            for a in np.linspace(-0.08, 0.08, 5):
                data = two_mode_map(SpacetimeParams(M, a, lam), 0, 100)
                res = newton_invert_two(data, lam, 100)
                worst = max(worst, abs(res.params.M - M), abs(res.params.a - a))
    assert worst <= 1e-10


def test_newton_quadratic_convergence():
    data = two_mode_map(SpacetimeParams(1.05, 0.08, L), 1, 50)
    res = newton_invert_two(data, L, 50, 1, NewtonOptions(jacobian="analytic"))
    h = [r for r in res.residual_history if r > 0]
    ratios = [h[k + 1] / h[k] ** 2 for k in range(len(h) - 1) if h[k] < 1e-3 and h[k + 1] > 1e-15]
    assert ratios, res.residual_history
    assert max(ratios) < 1e3


def test_analytic_jacobian_matches_fd():
    for a in (0.0, 0.06):
        params = SpacetimeParams(1.0, a, L)
        J_an = two_mode_jacobian_analytic(params, 100)
        f = lambda x: np.array(two_mode_map(SpacetimeParams(x[0], x[1], L), 0, 100))
        J_fd = numeric_jacobian(f, [1.0, a], 1e-5, richardson=True)
        np.testing.assert_allclose(J_an, J_fd, rtol=1e-8, atol=1e-10)


def test_numeric_jacobian_geometric_examples():
    c = closed_form_coefficients(1.0, L)
    J = numeric_jacobian(geo2(L), [1.0, 0.0])
    assert J[0, 0] == pytest.approx(-0.2405626, abs=1e-7)
    assert J[0, 0] == pytest.approx(c.Omega_ph_prime, abs=1e-8)
    assert J[1, 1] == pytest.approx(c.c_Z, abs=1e-8)
    assert abs(J[0, 1]) <= 1e-8
    det, ratio = stability_ratio(J)
    assert det == pytest.approx(c.Omega_ph_prime * c.c_Z, abs=1e-9)
    assert det == pytest.approx(-0.0210270, abs=1e-7)
    assert ratio == pytest.approx(np.linalg.norm(J, 2) / abs(det))


def test_numeric_jacobian_one_sided():
    f = lambda x: np.array([math.sqrt(x[0]) + x[1] ** 2])
    J = numeric_jacobian(f, [1e-9, 2.0], 1e-4, richardson=True, lower=[0.0, -math.inf])
    assert np.all(np.isfinite(J))
    assert J[0, 1] == pytest.approx(4.0, rel=1e-9)


def test_det_g_expansion():
    c = closed_form_coefficients(1.0, L)
    lead = c.Omega_ph_prime * c.c_Z
    fits = []
    for a in (0.08, 0.04, 0.02):
        det = np.linalg.det(numeric_jacobian(geo2(L), [1.0, a], 1e-5, richardson=True))
        fits.append((det - lead) / a ** 2)
    assert fits[1] == pytest.approx(fits[2], rel=0.05)
    assert fits[0] == pytest.approx(fits[1], rel=0.1)


def test_unlabeled_recovery():
    outs = []
    for a in (0.05, -0.05):
        U, absV = unlabeled_observables(SpacetimeParams(1.0, a, L), 0, 100)
        res = unlabeled_invert(U, absV, L, 100)
        assert res.sign_ambiguous
        outs.append((res.params.M, res.params.a))
    assert outs[0] == outs[1]
    assert outs[0][1] == pytest.approx(0.05, abs=1e-10)
    U, absV = unlabeled_observables(SpacetimeParams(1.0, 0.0, L), 0, 100)
    res = unlabeled_invert(U, absV, L, 100)
    assert res.params.a == 0.0 and not res.sign_ambiguous
    with pytest.raises(ValueError):
        unlabeled_invert(U, -1e-3, L, 100)


def test_noisy_inversion_bound():
    params = SpacetimeParams(1.0, 0.05, L)
    pair = apply_noise(pseudopole_pair(params, 0, 100), NoiseSpec(1e-3, -1e-3))
    res = newton_invert_two(two_mode_from_pair(pair, 100), L, 100)
    err = math.hypot(res.params.M - 1.0, res.params.a - 0.05)
    assert 0 < err <= res.stability_constant * 1e-3 / 100


def test_singular_jacobian_guard():
    # A guard floor above any attainable |det| must trip.
    data = two_mode_map(SpacetimeParams(1.0, 0.05, L), 0, 100)
    from kdsqnm import inversion

    orig = inversion.closed_form_coefficients

    class Big:
        def __init__(self, c):
            self.Omega_ph_prime = c.Omega_ph_prime * 100
            self.c_Z = c.c_Z

    try:
        inversion.closed_form_coefficients = lambda M, Lam: Big(orig(M, Lam))
        with pytest.raises(SingularJacobian):
            newton_invert_two(data, L, 100)
    finally:
        inversion.closed_form_coefficients = orig


def test_three_parameter_round_trip():
    data = three_map(SpacetimeParams(1.0, 0.2, L), 0, 200)
    res = newton_invert_three(data, 200, 0)
    assert res.params.M == pytest.approx(1.0, abs=1e-8)
    assert res.params.a == pytest.approx(0.2, abs=1e-8)
    assert res.params.Lambda == pytest.approx(L, abs=1e-8)
    assert res.final_residual <= 1e-11
    # finite-ell det, leading-order geometric value ~ -4.993e-4
    assert three_det_leading(1.0, L) * 0.04 == pytest.approx(-4.993e-4, abs=1e-6)
    assert res.jacobian_det == pytest.approx(three_det_leading(1.0, L) * 0.04, rel=0.2)


def test_three_parameter_negative_spin():
    data = three_map(SpacetimeParams(0.95, -0.15, 0.03), 1, 150)
    res = newton_invert_three(data, 150, 1)
    assert res.params.as_tuple() == pytest.approx((0.95, -0.15, 0.03), abs=1e-8)


def test_three_parameter_degenerate():
    with pytest.raises(NearDegenerate):
        newton_invert_three(three_map(SpacetimeParams(1.0, 0.0, L), 0, 200), 200, 0)
    with pytest.raises(NearDegenerate):
        newton_invert_three(three_map(SpacetimeParams(1.0, 0.02, L), 0, 200), 200, 0)


def test_stability_constants():
    Ms = np.linspace(0.9, 1.1, 5)
    As = np.linspace(-0.1, 0.1, 5)
    sc = stability_constants(geo2(L), Ms, As, L)
    c = closed_form_coefficients(1.1, L)
    assert sc.nodes_used == 25 and sc.nodes_filtered == 0
    assert math.isfinite(sc.C_star) and sc.C_star == pytest.approx(sc.L_star / sc.c_star)
    # worst determinant sits near |Omega_ph' c_Z| at the heavy corner
    assert sc.c_star == pytest.approx(abs(c.Omega_ph_prime * c.c_Z), rel=0.05)
    single = stability_constants(geo2(L), [1.0], [0.0], L)
    assert single.c_star == pytest.approx(0.0210270, abs=1e-7)
    with pytest.raises(EmptyRegion):
        stability_constants(geo2(L), [1.7, 1.8, 1.9], [0.0], L)


def test_p_matrix_scan_small():
    rep = p_matrix_rectangle_scan(RectangleSpec(0.95, 1.05, -0.05, 0.05, 5, 5), L, 100)
    assert rep.passed and rep.minors_ok and not rep.truncated
    assert rep.collisions == 0 and len(rep.nodes) == 25
    assert rep.worst_minus_dU_dM > 0 and rep.worst_dV_da > 0 and rep.worst_minus_det > 0


def test_p_matrix_scan_truncation_and_single_node():
    rep = p_matrix_rectangle_scan(RectangleSpec(1.5, 1.8, 0.0, 0.05, 4, 2), L, 100)
    assert rep.truncated and rep.nodes_filtered > 0
    assert rep.passed
    one = p_matrix_rectangle_scan(RectangleSpec(1.0, 1.0, 0.02, 0.02, 1, 1), L, 100)
    assert len(one.nodes) == 1 and one.passed == one.nodes[0].ok
    with pytest.raises(EmptyRegion):
        p_matrix_rectangle_scan(RectangleSpec(1.7, 1.9, 0.0, 0.05, 3, 2), L, 100)
