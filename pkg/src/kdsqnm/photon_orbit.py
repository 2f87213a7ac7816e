"""Equatorial circular photon orbits, Lyapunov exponents and small-a coefficients.

A circular null orbit r = const, dphi/dt = Omega on theta = pi/2 solves

    Phi(r, Omega) = g_tt + 2 Omega g_tphi + Omega^2 g_phiphi = 0,
    d/dr Phi(r, Omega) = 0.

The primary solver runs Newton on that system in (r, Omega) with the analytic
Jacobian.  An independent solver on the double-root conditions R = R' = 0 of
the radial potential in (r, b), b = L/E, is shipped for cross-checks.

Every metric coefficient is written as h(r) / r^2 with h polynomial in r, so
all r-derivatives are exact closed forms.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateJacobian,
    HorizonEvaluation,
    NegativeCurvature,
    NoConvergence,
    OutsideAdmissible,
)
from .kds_core import SpacetimeParams, evaluate_delta_r, horizon_roots

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50
CONTINUATION_STEP = 0.02  # in units of M
DET_GUARD = 1e-3  # fraction of the a = 0 determinant 4 * Omega_ph


class Branch(enum.Enum):
    CO = "co"
    COUNTER = "counter"

    @property
    def sign(self) -> int:
        return 1 if self is Branch.CO else -1

    @property
    def other(self) -> "Branch":
        return Branch.COUNTER if self is Branch.CO else Branch.CO

    @classmethod
    def parse(cls, value: "Branch | str") -> "Branch":
        if isinstance(value, Branch):
            return value
        text = str(value).strip().lower()
        aliases = {"+": "co", "co": "co", "pro": "co", "-": "counter", "counter": "counter", "retro": "counter"}
        try:
            return cls(aliases[text])
        except KeyError:
            raise ValueError(f"unknown branch {value!r}; expected 'co' or 'counter'") from None


@dataclass(frozen=True)
class CircularOrbit:
    branch: Branch
    r_orbit: float
    Omega: float
    b: float
    lyapunov: float
    residual: float
    iterations: int = 0


@dataclass(frozen=True)
class SeriesCoefficients:
    """Closed-form small-a coefficients at fixed (M, Lambda)."""

    Omega_ph: float
    Omega_ph_prime: float
    c_Z: float
    c_Omega2: float
    c_lambda2: float
    r1: float
    r2: float
    b0: float
    b1: float
    b2: float
    beta2: float

    def as_dict(self) -> dict[str, float]:
        return dict(self.__dict__)


def photon_sphere_frequency(M: float, Lambda: float) -> float:
    x = 9.0 * Lambda * M * M
    if x >= 1.0:
        raise OutsideAdmissible(f"9*Lambda*M^2 = {x:.6g} >= 1")
    return math.sqrt(1.0 - x) / (3.0 * math.sqrt(3.0) * M)


def closed_form_coefficients(M: float, Lambda: float) -> SeriesCoefficients:
    """Evaluate the printed closed forms for the a -> 0 expansions.

    Raises
    ------
    OutsideAdmissible
        If 9 Lambda M^2 >= 1.
    """
    x = 9.0 * Lambda * M * M
    if M <= 0.0 or x >= 1.0:
        raise OutsideAdmissible(f"need M > 0 and 9*Lambda*M^2 < 1 (got M={M!r}, 9*Lambda*M^2={x:.6g})")
    S = math.sqrt(1.0 - x)
    s3 = math.sqrt(3.0)
    LM2 = Lambda * M * M
    return SeriesCoefficients(
        Omega_ph=S / (3.0 * s3 * M),
        Omega_ph_prime=-(S / (M * M) + 9.0 * Lambda / S) / (3.0 * s3),
        c_Z=(2.0 + x) / (27.0 * M * M),
        c_Omega2=s3 * (11.0 - 45.0 * LM2) / (486.0 * M ** 3 * S),
        c_lambda2=s3 * (45.0 * LM2 - 2.0) / (243.0 * M ** 3 * S),
        r1=-2.0 / s3 * S,
        r2=-(3.0 * Lambda * M + 2.0 / (9.0 * M)),
        b0=3.0 * s3 * M / S,
        b1=-(2.0 + x) / (S * S),
        b2=s3 * (54.0 * LM2 * LM2 + 39.0 * LM2 - 1.0) / (6.0 * M * S ** 3),
        beta2=s3 * (45.0 * LM2 - 1.0) / (6.0 * M * S ** 3),
    )


# -- null quadratic ----------------------------------------------------------


def _metric_numerators(params: SpacetimeParams, r: float):
    """(h, h', h'') for g_tt, g_tphi, g_phiphi, each written as h(r) / r^2."""
    a = params.a
    xi = params.Xi
    d0 = evaluate_delta_r(params, r, 0)
    d1 = evaluate_delta_r(params, r, 1)
    d2 = evaluate_delta_r(params, r, 2)
    q = r * r + a * a
    c = a / xi
    k = 1.0 / (xi * xi)
    tt = (a * a - d0, -d1, -d2)
    tp = (c * (d0 - q), c * (d1 - 2.0 * r), c * (d2 - 2.0))
    pp = (k * (q * q - a * a * d0), k * (4.0 * r * q - a * a * d1), k * (4.0 * q + 8.0 * r * r - a * a * d2))
    return tt, tp, pp


def _phi_derivatives(params: SpacetimeParams, r: float, Omega: float):
    """Phi and the partials Phi_r, Phi_Omega, Phi_rr, Phi_rOmega."""
    tt, tp, pp = _metric_numerators(params, r)
    W = Omega
    H0 = tt[0] + 2.0 * W * tp[0] + W * W * pp[0]
    H1 = tt[1] + 2.0 * W * tp[1] + W * W * pp[1]
    H2 = tt[2] + 2.0 * W * tp[2] + W * W * pp[2]
    G0 = 2.0 * tp[0] + 2.0 * W * pp[0]  # d/dOmega of H0
    G1 = 2.0 * tp[1] + 2.0 * W * pp[1]
    r2 = r * r
    r3 = r2 * r
    phi = H0 / r2
    phi_r = H1 / r2 - 2.0 * H0 / r3
    phi_rr = H2 / r2 - 4.0 * H1 / r3 + 6.0 * H0 / (r2 * r2)
    phi_w = G0 / r2
    phi_rw = G1 / r2 - 2.0 * G0 / r3
    return phi, phi_r, phi_w, phi_rr, phi_rw


def null_quadratic(params: SpacetimeParams, r: float, Omega: float) -> tuple[float, float, float]:
    """Phi(r, Omega) and its analytic r- and Omega-derivatives."""
    if r <= 0.0:
        raise ValueError(f"r must be positive, got {r!r}")
    phi, phi_r, phi_w, _, _ = _phi_derivatives(params, r, Omega)
    return phi, phi_r, phi_w


def orbit_system_jacobian(params: SpacetimeParams, r: float, Omega: float) -> np.ndarray:
    """Jacobian of (Phi, Phi_r) with respect to (r, Omega)."""
    _, phi_r, phi_w, phi_rr, phi_rw = _phi_derivatives(params, r, Omega)
    return np.array([[phi_r, phi_w], [phi_rr, phi_rw]])


def _phi_parameter_partials(params: SpacetimeParams, r: float, Omega: float) -> np.ndarray:
    """d(Phi, Phi_r)/d(M, a) at fixed (r, Omega), as a 2x2 array."""
    M, a, lam = params.as_tuple()
    xi = params.Xi
    d0 = evaluate_delta_r(params, r, 0)
    d1 = evaluate_delta_r(params, r, 1)
    q = r * r + a * a
    c = a / xi
    k = 1.0 / (xi * xi)
    W = Omega

    # M-derivatives of the numerators and their r-derivatives.
    dM_tt = (2.0 * r, 2.0)
    dM_tp = (-2.0 * r * c, -2.0 * c)
    dM_pp = (2.0 * r * a * a * k, 2.0 * a * a * k)

    xi_a = 2.0 * lam * a / 3.0
    c_a = (xi - a * xi_a) / (xi * xi)
    k_a = -2.0 * xi_a / xi ** 3
    d0_a = 2.0 * a * (1.0 - lam * r * r / 3.0)
    d1_a = -4.0 * lam * r * a / 3.0
    da_tt = (2.0 * a - d0_a, -d1_a)
    da_tp = (
        c_a * (d0 - q) + c * (d0_a - 2.0 * a),
        c_a * (d1 - 2.0 * r) + c * d1_a,
    )
    da_pp = (
        k_a * (q * q - a * a * d0) + k * (4.0 * a * q - 2.0 * a * d0 - a * a * d0_a),
        k_a * (4.0 * r * q - a * a * d1) + k * (8.0 * a * r - 2.0 * a * d1 - a * a * d1_a),
    )

    r2 = r * r
    out = np.empty((2, 2))
    for j, (tt, tp, pp) in enumerate(((dM_tt, dM_tp, dM_pp), (da_tt, da_tp, da_pp))):
        H0 = tt[0] + 2.0 * W * tp[0] + W * W * pp[0]
        H1 = tt[1] + 2.0 * W * tp[1] + W * W * pp[1]
        out[0, j] = H0 / r2
        out[1, j] = H1 / r2 - 2.0 * H0 / (r2 * r)
    return out


def orbit_parameter_derivatives(params: SpacetimeParams, orbit: CircularOrbit) -> np.ndarray:
    """d(r_orbit, Omega)/d(M, a) by the implicit function theorem.

    Rows are (r, Omega), columns (M, a).
    """
    J = orbit_system_jacobian(params, orbit.r_orbit, orbit.Omega)
    P = _phi_parameter_partials(params, orbit.r_orbit, orbit.Omega)
    return -np.linalg.solve(J, P)


# -- radial potential and Lyapunov exponent ----------------------------------


def _radial_terms(params: SpacetimeParams, r: float, b: float):
    a = params.a
    xi = params.Xi
    d0 = evaluate_delta_r(params, r, 0)
    d1 = evaluate_delta_r(params, r, 1)
    d2 = evaluate_delta_r(params, r, 2)
    q = r * r + a * a
    P = q - a * xi * b
    B = xi * b - a
    R = P * P - d0 * B * B
    R1 = 4.0 * r * P - d1 * B * B
    R2 = 12.0 * r * r + 4.0 * a * a - 4.0 * a * xi * b - d2 * B * B
    return R, R1, R2, d0, d1, P, B, q


def radial_potential_suite(params: SpacetimeParams, r: float, b: float) -> tuple[float, float, float, float]:
    """R, R', R'' and dt/dtau at radius r for impact parameter b (E = 1).

    Raises
    ------
    HorizonEvaluation
        If r is not strictly inside (r_e, r_c).
    """
    horizons = horizon_roots(params)
    if not (horizons.r_e < r < horizons.r_c):
        raise HorizonEvaluation(f"r={r!r} outside the exterior ({horizons.r_e!r}, {horizons.r_c!r})")
    R, R1, R2, d0, _, P, B, q = _radial_terms(params, r, b)
    if d0 == 0.0:
        raise HorizonEvaluation(f"Delta_r vanishes at r={r!r}")
    r2 = r * r
    t_dot = q * P / (d0 * r2) + params.a * B / r2
    return R, R1, R2, t_dot


def _lyapunov_at(params: SpacetimeParams, r: float, b: float) -> float:
    _, _, R2, t_dot = radial_potential_suite(params, r, b)
    if R2 <= 0.0:
        raise NegativeCurvature(f"R''={R2!r} <= 0 at r={r!r}: orbit is not unstable")
    return math.sqrt(R2 / (2.0 * r ** 4 * t_dot * t_dot))


def lyapunov_exponent(params: SpacetimeParams, orbit: CircularOrbit) -> float:
    """Coordinate-time instability rate sqrt(R'' / (2 r^4 tdot^2)) of a circular orbit."""
    R, R1, _, _, _, _, _, _ = _radial_terms(params, orbit.r_orbit, orbit.b)
    scale = orbit.r_orbit ** 4
    if abs(R) > 1e-10 * scale or abs(R1) > 1e-10 * scale / orbit.r_orbit:
        raise ValueError(
            f"not a double root of R: R={R:.3e}, R'={R1:.3e} at r={orbit.r_orbit!r}"
        )
    return _lyapunov_at(params, orbit.r_orbit, orbit.b)


# -- solvers -----------------------------------------------------------------


def _check_admissible(params: SpacetimeParams):
    horizons = horizon_roots(params)
    omega_ph = photon_sphere_frequency(params.M, params.Lambda)
    return horizons, omega_ph


def _newton_r_omega(params: SpacetimeParams, r: float, W: float, det_floor: float, tol: float, max_iter: int):
    for it in range(1, max_iter + 1):
        phi, phi_r, phi_w, phi_rr, phi_rw = _phi_derivatives(params, r, W)
        det = phi_r * phi_rw - phi_w * phi_rr
        if abs(det) < det_floor:
            raise DegenerateJacobian(
                f"|det D(Phi, Phi_r)| = {abs(det):.3e} below guard {det_floor:.3e} at r={r!r}"
            )
        # Cramer's rule on [[phi_r, phi_w], [phi_rr, phi_rw]] @ (dr, dW) = -(phi, phi_r).
        dr = -(phi * phi_rw - phi_w * phi_r) / det
        dW = -(phi_r * phi_r - phi * phi_rr) / det
        converged = max(abs(phi), abs(phi_r)) <= tol
        r += dr
        W += dW
        if not (math.isfinite(r) and math.isfinite(W)) or r <= 0.0:
            raise NoConvergence(f"Newton left the domain after {it} iterations")
        if converged:
            # One polishing step has been taken past the tolerance.
            return r, W, it
    raise NoConvergence(f"no convergence in {max_iter} Newton iterations")


def _finish_orbit(params, branch, r, W, iterations, horizons):
    if not (horizons.r_e < r < horizons.r_c):
        raise NoConvergence(f"orbit radius {r!r} outside ({horizons.r_e!r}, {horizons.r_c!r})")
    if W == 0.0 or (W > 0) != (branch is Branch.CO):
        raise NoConvergence(f"converged to the wrong branch (Omega={W!r})")
    phi, phi_r, _ = null_quadratic(params, r, W)
    b = 1.0 / W
    lam = _lyapunov_at(params, r, b)
    return CircularOrbit(
        branch=branch,
        r_orbit=r,
        Omega=W,
        b=b,
        lyapunov=lam,
        residual=max(abs(phi), abs(phi_r)),
        iterations=iterations,
    )


def solve_circular_orbit(
    params: SpacetimeParams,
    branch: Branch | str,
    *,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
) -> CircularOrbit:
    """Co- or counter-rotating equatorial photon orbit.

    Newton starts from the Schwarzschild-de Sitter photon sphere
    (3M, +-Omega_ph).  If that fails, the branch is followed from a = 0 in
    steps of at most 0.02 M.

    Raises
    ------
    OutsideAdmissible, NotSubextremal, DegenerateRoot
        Parameter point outside the admissible family.
    NoConvergence
        Newton stalls, also along the continuation path.
    DegenerateJacobian
        |det| of the orbit-system Jacobian below 1e-3 * 4 Omega_ph.
    """
    branch = Branch.parse(branch)
    horizons, omega_ph = _check_admissible(params)
    det_floor = DET_GUARD * 4.0 * omega_ph
    r0, W0 = 3.0 * params.M, branch.sign * omega_ph
    try:
        r, W, its = _newton_r_omega(params, r0, W0, det_floor, tol, max_iter)
        return _finish_orbit(params, branch, r, W, its, horizons)
    except (NoConvergence, DegenerateJacobian):
        if params.a == 0.0:
            raise
    return _continue_orbit(params, branch, det_floor, tol, max_iter, horizons)


def _continue_orbit(params, branch, det_floor, tol, max_iter, horizons):
    a_target = params.a
    steps = max(2, math.ceil(abs(a_target) / (CONTINUATION_STEP * params.M)))
    r, W = 3.0 * params.M, branch.sign * photon_sphere_frequency(params.M, params.Lambda)
    prev = None
    total = 0
    for k in range(1, steps + 1):
        a_k = a_target * k / steps
        p_k = params.with_a(a_k)
        if prev is not None:
            # Secant predictor along the branch.
            r_seed, W_seed = 2.0 * r - prev[0], 2.0 * W - prev[1]
        else:
            r_seed, W_seed = r, W
        try:
            r_new, W_new, its = _newton_r_omega(p_k, r_seed, W_seed, det_floor, tol, max_iter)
        except NoConvergence as exc:
            raise NoConvergence(f"continuation failed at a={a_k!r}: {exc}") from exc
        prev = (r, W)
        r, W = r_new, W_new
        total += its
    return _finish_orbit(params, branch, r, W, total, horizons)


def solve_circular_orbit_rb(
    params: SpacetimeParams,
    branch: Branch | str,
    *,
    tol: float = 1e-13,
    max_iter: int = NEWTON_MAX_ITER,
) -> CircularOrbit:
    """Independent solver on the double-root system R(r) = R'(r) = 0 in (r, b).

    Tolerances are relative to r^4 (for R) and r^3 (for R').
    """
    branch = Branch.parse(branch)
    horizons, omega_ph = _check_admissible(params)
    a = params.a
    xi = params.Xi
    r, b = 3.0 * params.M, branch.sign / omega_ph
    for it in range(1, max_iter + 1):
        R, R1, R2, d0, d1, P, B, _ = _radial_terms(params, r, b)
        # d/db of R and R' at fixed r.
        Rb = -2.0 * a * xi * P - 2.0 * d0 * B * xi
        R1b = -4.0 * r * a * xi - 2.0 * d1 * B * xi
        det = R1 * R1b - Rb * R2
        if det == 0.0:
            raise DegenerateJacobian(f"singular (r, b) Jacobian at r={r!r}")
        dr = -(R * R1b - Rb * R1) / det
        db = -(R1 * R1 - R * R2) / det
        converged = abs(R) <= tol * r ** 4 and abs(R1) <= tol * r ** 3
        r += dr
        b += db
        if not (math.isfinite(r) and math.isfinite(b)) or r <= 0.0:
            raise NoConvergence(f"(r, b) Newton left the domain after {it} iterations")
        if converged:
            break
    else:
        raise NoConvergence(f"(r, b) Newton: no convergence in {max_iter} iterations")
    return _finish_orbit(params, branch, r, 1.0 / b, it, horizons)


def omega_sharp(params: SpacetimeParams, branch: Branch | str) -> float:
    """Positive-normalised angular velocity +-Omega_geo,+- of the given branch."""
    branch = Branch.parse(branch)
    return branch.sign * solve_circular_orbit(params, branch).Omega


def lyapunov_branch(params: SpacetimeParams, branch: Branch | str) -> float:
    """lambda_+(M, a) for the co branch and lambda_+(M, -a) for the counter branch.

    The Lyapunov formula is invariant under (a, b) -> (-a, -b), so evaluating
    it directly on the counter-rotating orbit gives the reflected co-rotating
    value.
    """
    return solve_circular_orbit(params, branch).lyapunov
