import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kdsqnm import kds_core
from kdsqnm.errors import DegenerateRoot, KdsError, NotSubextremal, OutOfRange
from kdsqnm.kds_core import (
    SpacetimeParams,
    equatorial_metric,
    evaluate_delta_r,
    horizon_roots,
    is_subextremal,
    quartic_coefficients,
)

SDS = SpacetimeParams(1.0, 0.0, 0.04)


def _sds_roots_oracle(M, Lambda):
    """Real roots of the SdS cubic (Lambda/3) r^3 - r + 2M, by trigonometric form."""
    # r^3 + p r + q = 0 with p = -3/Lambda, q = 6M/Lambda
    p, q = -3.0 / Lambda, 6.0 * M / Lambda
    m = 2.0 * math.sqrt(-p / 3.0)
    theta = math.acos(3.0 * q / (p * m)) / 3.0
    return sorted(m * math.cos(theta - 2.0 * math.pi * k / 3.0) for k in range(3))


def test_params_validation():
    with pytest.raises(ValueError):
        SpacetimeParams(0.0, 0.1, 0.04)
    with pytest.raises(ValueError):
        SpacetimeParams(1.0, 0.1, -1e-3)
    with pytest.raises(ValueError):
        SpacetimeParams(1.0, math.nan, 0.04)
    p = SpacetimeParams(1, 0, 0)
    assert isinstance(p.M, float) and p.Xi == 1.0


def test_delta_r_values_at_three():
    # (r^2)(1 - 0.04 r^2/3) - 2r at r = 3
    assert evaluate_delta_r(SDS, 3.0) == pytest.approx(1.92, abs=1e-14)
    assert evaluate_delta_r(SDS, 3.0, 2) == pytest.approx(0.56, abs=1e-14)
    # first derivative against a central difference
    h = 1e-5
    fd = (evaluate_delta_r(SDS, 3.0 + h) - evaluate_delta_r(SDS, 3.0 - h)) / (2 * h)
    assert evaluate_delta_r(SDS, 3.0, 1) == pytest.approx(fd, rel=1e-9)
    with pytest.raises(ValueError):
        evaluate_delta_r(SDS, 3.0, 3)


def test_sds_horizons_against_cubic_oracle():
    h = horizon_roots(SDS)
    r0, re, rc = _sds_roots_oracle(1.0, 0.04)
    assert h.r_minus == 0.0
    assert h.r0 == pytest.approx(r0, rel=1e-12)
    assert h.r_e == pytest.approx(re, rel=1e-12)
    assert h.r_c == pytest.approx(rc, rel=1e-12)
    assert h.r_e == pytest.approx(2.128592746, abs=1e-9)
    assert h.r_c == pytest.approx(7.397489472, abs=1e-9)
    assert h.L_sep == pytest.approx(h.r_c - h.r_e)
    assert "r_minus degenerate at a=0" in h.diagnostics


def test_surface_gravity_sds():
    h = horizon_roots(SDS)
    # kappa = |f'(r_h)| / 2 with f = 1 - 2M/r - Lambda r^2/3
    def fprime(r):
        return 2.0 / r ** 2 - 2.0 * 0.04 * r / 3.0
    assert h.kappa_e == pytest.approx(abs(fprime(h.r_e)) / 2.0, rel=1e-12)
    assert h.kappa_c == pytest.approx(abs(fprime(h.r_c)) / 2.0, rel=1e-12)


@pytest.mark.parametrize("a", [0.05, 0.3, 0.7])
def test_vieta_identities(a):
    params = SpacetimeParams(1.0, a, 0.04)
    h = horizon_roots(params)
    c4, c3, c2, c1, c0 = quartic_coefficients(params)
    r = np.array([h.r0, h.r_minus, h.r_e, h.r_c])
    e1 = r.sum()
    e2 = sum(r[i] * r[j] for i in range(4) for j in range(i + 1, 4))
    e3 = sum(r[i] * r[j] * r[k] for i in range(4) for j in range(i + 1, 4) for k in range(j + 1, 4))
    e4 = r.prod()
    scale = np.abs(r).max()
    assert abs(e1 + c3 / c4) <= 1e-10 * scale
    assert e2 == pytest.approx(c2 / c4, rel=1e-10)
    assert e3 == pytest.approx(-c1 / c4, rel=1e-10)
    assert e4 == pytest.approx(c0 / c4, rel=1e-10)


def test_even_in_a():
    for a in (0.1, 0.45):
        assert horizon_roots(SpacetimeParams(1, a, 0.04)) == horizon_roots(SpacetimeParams(1, -a, 0.04))


@settings(max_examples=80, deadline=None)
@given(
    M=st.floats(0.3, 3.0),
    a_frac=st.floats(-0.6, 0.6),
    x=st.floats(0.02, 0.8),
)
def test_residual_bound_property(M, a_frac, x):
    params = SpacetimeParams(M, a_frac * M, x / (9.0 * M * M))
    try:
        h = horizon_roots(params)
    except KdsError:
        return
    coeffs = quartic_coefficients(params)
    assert h.residuals <= 1e-12 * max(1.0, sum(abs(c) for c in coeffs))
    assert h.r0 < 0.0 <= h.r_minus < h.r_e < h.r_c
    for r in (h.r0, h.r_minus, h.r_e, h.r_c):
        assert abs(evaluate_delta_r(params, r)) <= h.residuals


def test_small_lambda_uses_term_scaled_bound():
    # r_c ~ sqrt(3/Lambda): Delta_r terms there are ~1/Lambda, so only a
    # relative residual is attainable.
    for lam in (1e-4, 1e-8):
        params = SpacetimeParams(1.0, 0.3, lam)
        h = horizon_roots(params)
        assert h.r_c == pytest.approx(math.sqrt(3.0 / lam), rel=1e-2)
        terms = sum(abs(c) * h.r_c ** (4 - k) for k, c in enumerate(quartic_coefficients(params)))
        assert h.residuals <= 1e-12 * terms
        assert h.r_e == pytest.approx(1.0 + math.sqrt(1.0 - 0.09), rel=1e-3)


def test_schwarzschild_limit_lambda_1e12():
    h = horizon_roots(SpacetimeParams(1.0, 0.0, 1e-12))
    assert h.r_e == pytest.approx(2.0, abs=1e-10)
    assert h.r_c == pytest.approx(math.sqrt(3e12), rel=1e-6)


@pytest.mark.parametrize("lam", [1e-26, 1e-46, 1e-120, 1e-300])
@pytest.mark.parametrize("a", [0.0, 1e-150, 0.3, 0.9])
def test_disparate_scales(lam, a):
    # Astrophysical Lambda M^2 is tiny; the inner pair must stay accurate.
    params = SpacetimeParams(1.0, a, lam)
    h = horizon_roots(params)
    kerr = horizon_roots(SpacetimeParams(1.0, a, 0.0))
    assert h.r_e == pytest.approx(kerr.r_e, rel=1e-12)
    assert h.r_minus == pytest.approx(kerr.r_minus, rel=1e-12)
    assert h.r_c == pytest.approx(math.sqrt(3.0 / lam), rel=1e-6)
    assert abs(evaluate_delta_r(params, h.r_e)) < 1e-14


def test_lambda_below_double_range():
    with pytest.raises(OutOfRange):
        horizon_roots(SpacetimeParams(1.0, 0.2, 1e-310))


def test_kerr_limit():
    h = horizon_roots(SpacetimeParams(1.0, 0.6, 0.0))
    assert h.r_e == pytest.approx(1.8, abs=1e-14)
    assert h.r_minus == pytest.approx(0.2, abs=1e-14)
    assert math.isinf(h.r_c) and math.isinf(h.L_sep) and h.r0 == -math.inf
    assert h.kappa_c == 0.0
    assert any("missing cosmological horizon" in d for d in h.diagnostics)
    with pytest.raises(NotSubextremal):
        horizon_roots(SpacetimeParams(1.0, 1.0, 0.0))


def test_not_subextremal():
    with pytest.raises(NotSubextremal):
        horizon_roots(SpacetimeParams(1.0, 0.1, 0.2))
    with pytest.raises(NotSubextremal):
        horizon_roots(SpacetimeParams(1.0, 1.2, 0.001))


def test_degenerate_root_detected(monkeypatch):
    params = SpacetimeParams(1.0, 0.5, 0.04)
    coeffs = quartic_coefficients(params)
    r0, r_minus, r_e, r_c = np.sort(np.roots(coeffs).real)

    def fake_roots(c):
        # Two candidates both sitting on r_e: they polish to the same root.
        if c[0] == coeffs[0]:
            return np.array([r0, r_e * (1 + 1e-13), r_e, r_minus], dtype=complex)
        return np.array([1.0 / r_e, 1.0 / r_c, 1.0 / r0, 1.0 / r_e], dtype=complex)

    horizon_roots.cache_clear()
    monkeypatch.setattr(kds_core.np, "roots", fake_roots)
    with pytest.raises(DegenerateRoot):
        horizon_roots(params)
    monkeypatch.undo()
    horizon_roots.cache_clear()
    assert horizon_roots(params).r_minus == pytest.approx(r_minus)


def test_near_extremal_sweep_is_clean():
    # Around the spin where r_- and r_e merge, every call either raises a
    # domain error or returns data satisfying the invariants.
    edge = 1.0003338903006693
    for k in range(-40, 40):
        params = SpacetimeParams(1.0, edge + k * 2.2e-16, 0.001)
        try:
            h = horizon_roots(params)
        except KdsError:
            continue
        assert h.r_minus < h.r_e
        assert h.r_e - h.r_minus > 1e-9 * min(h.L_sep, h.r_e)
        assert h.residuals <= 1e-12 * max(1.0, sum(abs(c) for c in quartic_coefficients(params)))


def test_is_subextremal_diagnostics():
    assert is_subextremal(SpacetimeParams(1.0, 0.1, 0.2)) == (False, "9ΛM² ≥ 1")
    assert is_subextremal(SpacetimeParams(1.0, 0.1, 0.04)).ok
    res = is_subextremal(SpacetimeParams(1.0, 0.0, 0.04))
    assert res.ok and "r_minus degenerate" in res.diagnostic
    bad = is_subextremal(SpacetimeParams(1.0, 1.2, 0.001))
    assert not bad.ok and "NotSubextremal" in bad.diagnostic


def test_metric_sds_is_exact():
    g = equatorial_metric(SDS, 3.0)
    f = 1.0 - 2.0 / 3.0 - 0.04 * 9.0 / 3.0
    assert g.g_tt == -f
    assert g.g_tphi == 0.0
    assert g.g_phiphi == 9.0
    assert g.g_tt == pytest.approx(-0.2133333333333333, abs=1e-15)


def test_metric_kerr_tphi():
    g = equatorial_metric(SpacetimeParams(1.0, 0.1, 0.0), 3.0)
    assert g.g_tphi == pytest.approx(0.1 * (3.01 - 9.01) / 9.0, rel=1e-14)
    # Kerr equatorial g_tt = -(1 - 2M/r)
    assert g.g_tt == pytest.approx(-(1.0 - 2.0 / 3.0), rel=1e-14)


def test_metric_determinant_identity():
    # On the equatorial plane g_tphi^2 - g_tt g_phiphi = Delta_r / Xi^2.
    params = SpacetimeParams(1.1, 0.4, 0.05)
    for r in (2.5, 3.3, 4.0):
        g = equatorial_metric(params, r)
        lhs = g.g_tphi ** 2 - g.g_tt * g.g_phiphi
        assert lhs == pytest.approx(evaluate_delta_r(params, r) / params.Xi ** 2, rel=1e-12)
    with pytest.raises(ValueError):
        equatorial_metric(params, 0.0)
