"""Numerical checks of the closed-form small-a expansions and of noise propagation.

Everything here drives the solvers in :mod:`kdsqnm.photon_orbit` and
:mod:`kdsqnm.inversion` and compares against
:func:`kdsqnm.photon_orbit.closed_form_coefficients`; nothing is reused from
the closed forms on the computed side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import IllConditionedFit
from .inversion import NewtonOptions, newton_invert_two, numeric_jacobian, three_det_leading
from .kds_core import SpacetimeParams
from .photon_orbit import Branch, closed_form_coefficients, solve_circular_orbit
from .spectrum import (
    NoiseSpec,
    apply_noise,
    geometric_three_map,
    geometric_two_map,
    pseudopole_pair,
    two_mode_from_pair,
)

DEFAULT_GRID = (-0.02, -0.015, -0.01, -0.005, 0.005, 0.01, 0.015, 0.02)
QUANTITIES = ("Omega_plus", "lambda_plus", "r_plus", "U_geo", "V_geo")
MAX_CONDITION = 1e8
DEFAULT_NOISE_SEED = 20240611


def _sampler(quantity: str, M: float, Lambda: float) -> Callable[[float], float]:
    def co(a):
        return solve_circular_orbit(SpacetimeParams(M, a, Lambda), Branch.CO)

    samplers = {
        "Omega_plus": lambda a: co(a).Omega,
        "lambda_plus": lambda a: co(a).lyapunov,
        "r_plus": lambda a: co(a).r_orbit,
        "U_geo": lambda a: geometric_two_map(SpacetimeParams(M, a, Lambda)).U,
        "V_geo": lambda a: geometric_two_map(SpacetimeParams(M, a, Lambda)).V,
    }
    try:
        return samplers[quantity]
    except KeyError:
        raise ValueError(f"unknown quantity {quantity!r}; choose from {QUANTITIES}") from None


def reference_coefficients(quantity: str, M: float, Lambda: float) -> dict[int, float]:
    """Closed-form Taylor coefficients {power: value} for a quantity."""
    c = closed_form_coefficients(M, Lambda)
    return {
        "Omega_plus": {0: c.Omega_ph, 1: c.c_Z, 2: c.c_Omega2},
        "lambda_plus": {0: c.Omega_ph, 1: 0.0, 2: c.c_lambda2},
        "r_plus": {0: 3.0 * M, 1: c.r1, 2: c.r2},
        "U_geo": {0: c.Omega_ph, 1: 0.0, 2: c.c_Omega2},
        "V_geo": {0: 0.0, 1: c.c_Z, 2: 0.0},
    }[quantity]


_NATURAL_PARITY = {"U_geo": "even", "V_geo": "odd"}


@dataclass(frozen=True)
class SeriesFitReport:
    quantity: str
    M: float
    Lambda: float
    degree: int
    parity: str
    grid: tuple[float, ...]
    coefficients: dict[int, float]
    uncertainties: dict[int, float]
    reference: dict[int, float]
    abs_discrepancy: dict[int, float]
    rel_discrepancy: dict[int, float]
    fit_residual: float
    condition: float

    def coefficient(self, power: int) -> float:
        return self.coefficients.get(power, 0.0)

    def uncertainty(self, power: int) -> float:
        return self.uncertainties.get(power, 0.0)


def fit_series_coefficients(
    quantity: str,
    M: float,
    Lambda: float,
    grid: Sequence[float] | None = None,
    degree: int = 4,
    parity: str = "auto",
) -> SeriesFitReport:
    """Least-squares Taylor fit in a of a solver output around a = 0.

    ``grid`` is in units of M and must be symmetric about zero.  ``parity``
    is "auto" (even for U_geo, odd for V_geo, free otherwise), "none", "even"
    or "odd"; under a parity constraint the excluded powers are fixed to 0.
    """
    if degree < 3:
        raise ValueError(f"degree must be >= 3, got {degree}")
    grid = tuple(float(g) for g in (DEFAULT_GRID if grid is None else grid))
    if sorted(grid) != sorted(-g for g in grid):
        raise ValueError("fit grid must be symmetric about a = 0")
    if parity == "auto":
        parity = _NATURAL_PARITY.get(quantity, "none")
    if parity not in ("none", "even", "odd"):
        raise ValueError(f"unknown parity {parity!r}")
    powers = [k for k in range(degree + 1) if parity == "none" or (k % 2 == 0) == (parity == "even")]

    f = _sampler(quantity, M, Lambda)
    a_values = np.array(grid) * M
    y = np.array([f(a) for a in a_values])

    scale = float(np.max(np.abs(a_values)))
    s = a_values / scale
    X = np.column_stack([s ** k for k in powers])
    if len(grid) < len(powers):
        raise IllConditionedFit(f"{len(grid)} grid points cannot fix {len(powers)} coefficients")
    cond = float(np.linalg.cond(X))
    if cond > MAX_CONDITION:
        raise IllConditionedFit(f"Vandermonde condition {cond:.3e} exceeds {MAX_CONDITION:.0e}")
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    dof = len(y) - len(powers)
    sigma2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = sigma2 * np.linalg.inv(X.T @ X)

    coeffs = {k: float(beta[i] / scale ** k) for i, k in enumerate(powers)}
    uncs = {k: float(math.sqrt(max(cov[i, i], 0.0)) / scale ** k) for i, k in enumerate(powers)}
    ref = reference_coefficients(quantity, M, Lambda)
    absd = {k: abs(coeffs.get(k, 0.0) - v) for k, v in ref.items()}
    reld = {k: absd[k] / abs(v) if v != 0.0 else math.nan for k, v in ref.items()}
    return SeriesFitReport(
        quantity=quantity,
        M=M,
        Lambda=Lambda,
        degree=degree,
        parity=parity,
        grid=grid,
        coefficients=coeffs,
        uncertainties=uncs,
        reference=ref,
        abs_discrepancy=absd,
        rel_discrepancy=reld,
        fit_residual=float(np.max(np.abs(resid))),
        condition=cond,
    )


# -- a -> 0 limits -------------------------------------------------------------


def geometric_three_jacobian(M: float, a: float, Lambda: float, rel_step: float = 1e-4) -> np.ndarray:
    """d(U_geo, V_geo, lambda_+)/d(M, a, Lambda) by Richardson differences.

    The Lambda column is one-sided when Lambda is within a step of zero.
    """

    def f(x):
        return np.array(geometric_three_map(SpacetimeParams(x[0], x[1], x[2])))

    return numeric_jacobian(f, [M, a, Lambda], rel_step, richardson=True, lower=[0.0, -math.inf, 0.0])


class LimitReport(NamedTuple):
    a_values: tuple[float, ...]
    ratios: tuple[float, ...]  # quantity / a^2 at each a
    extrapolations: tuple[float, ...]  # from consecutive pairs
    limit: float
    reference: float
    rel_error: float
    extrapolation_errors: tuple[float, ...]


def _extrapolate(a_values: Sequence[float], ratios: Sequence[float], reference: float) -> LimitReport:
    """Richardson step assuming ratio(a) = q0 + q1 a + O(a^2)."""
    ex = []
    for (a1, q1), (a2, q2) in zip(zip(a_values, ratios), zip(a_values[1:], ratios[1:])):
        ex.append((a1 * q2 - a2 * q1) / (a1 - a2))
    limit = ex[-1] if ex else ratios[-1]
    errs = tuple(abs(e - reference) / abs(reference) for e in ex)
    return LimitReport(
        a_values=tuple(a_values),
        ratios=tuple(ratios),
        extrapolations=tuple(ex),
        limit=limit,
        reference=reference,
        rel_error=abs(limit - reference) / abs(reference),
        extrapolation_errors=errs,
    )


def _check_decreasing(a_values: Sequence[float]):
    if len(a_values) < 2 or any(b >= a for a, b in zip(a_values, a_values[1:])) or min(a_values) <= 0:
        raise ValueError("a_values must be positive and strictly decreasing (at least two)")


def jacobian_det_limit_check(M: float, Lambda: float, a_values: Sequence[float] = (0.04, 0.02, 0.01)) -> LimitReport:
    """Extrapolate det D H_geo / a^2 to a -> 0 and compare with the closed form."""
    _check_decreasing(a_values)
    ratios = [float(np.linalg.det(geometric_three_jacobian(M, a, Lambda))) / (a * a) for a in a_values]
    return _extrapolate(a_values, ratios, three_det_leading(M, Lambda))


def lambda_minus_u_check(M: float, Lambda: float, a_values: Sequence[float] = (0.04, 0.02, 0.01)) -> LimitReport:
    """Extrapolate (lambda_+ - U_geo) / a^2 and compare with -(5 sqrt3/162) S / M^3."""
    _check_decreasing(a_values)
    ratios = []
    for a in a_values:
        h = geometric_three_map(SpacetimeParams(M, a, Lambda))
        ratios.append((h.W_tilde - h.U) / (a * a))
    S = math.sqrt(1.0 - 9.0 * Lambda * M * M)
    return _extrapolate(a_values, ratios, -5.0 * math.sqrt(3.0) / 162.0 * S / M ** 3)


# -- noise propagation -----------------------------------------------------------


class NoiseRow(NamedTuple):
    ell: int
    eps: float
    trials: int
    max_error: float
    scaled_error: float  # max_error * ell / eps
    stability_constant: float
    seed: int


def noise_directions(trials: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit complex phases for (eta_plus, eta_minus), reproducible from ``seed``."""
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, 2.0 * math.pi, size=(2, trials))
    return np.exp(1j * theta[0]), np.exp(1j * theta[1])


def noise_propagation_study(
    M: float,
    a: float,
    Lambda: float,
    n: int,
    ell_list: Sequence[int],
    eps_list: Sequence[float],
    trials: int = 32,
    seed: int = DEFAULT_NOISE_SEED,
    opts: NewtonOptions | None = None,
) -> list[NoiseRow]:
    """Worst-case parameter error of the two-parameter inversion under noise.

    For each trial eta_+- = (eps / 2) * exp(i theta_+-), so that
    |Re eta_+| + |Re eta_-| <= eps.  The same phases are reused for every
    (ell, eps) cell so that the scaling in either variable is not masked by
    sampling differences.
    """
    params = SpacetimeParams(M, a, Lambda)
    dir_plus, dir_minus = noise_directions(trials, seed)
    rows = []
    for ell in ell_list:
        pair = pseudopole_pair(params, n, ell)
        clean = newton_invert_two(two_mode_from_pair(pair, ell), Lambda, ell, n, opts)
        for eps in eps_list:
            worst = 0.0
            for k in range(trials):
                noise = NoiseSpec(0.5 * eps * complex(dir_plus[k]), 0.5 * eps * complex(dir_minus[k]))
                data = two_mode_from_pair(apply_noise(pair, noise), ell)
                rec = newton_invert_two(data, Lambda, ell, n, opts)
                worst = max(worst, math.hypot(rec.params.M - M, rec.params.a - a))
            scaled = worst * ell / eps if eps > 0 else math.nan
            rows.append(NoiseRow(int(ell), float(eps), int(trials), worst, scaled, clean.stability_constant, int(seed)))
    return rows


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])
