"""Parameter recovery from equatorial observables.

Two-parameter problem: (U, V) -> (M, a) at known Lambda, started from the
closed-form seed

    M0 = 1 / (3 sqrt(Lambda + 3 U^2)),   a0 = V / c_Z(M0),

and refined by Newton on the full model map.  Three-parameter problem:
(U, V, W_tilde) -> (M, a, Lambda), initialised by a coarse scan in Lambda.
Also: Jacobian/stability estimates on grids and the rectangle P-matrix check
that certifies injectivity of (M, a) -> (U, V) on a rectangle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import (
    EmptyRegion,
    KdsError,
    NearDegenerate,
    NoConvergence,
    OutOfRange,
    SingularJacobian,
)
from .kds_core import SpacetimeParams
from .photon_orbit import (
    Branch,
    closed_form_coefficients,
    orbit_parameter_derivatives,
    solve_circular_orbit,
)
from .spectrum import (
    ThreeObservables,
    TwoModeObservables,
    ell_factor,
    three_map,
    two_mode_map,
)

VectorMap = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class NewtonOptions:
    tol: float = 1e-12
    max_iter: int = 30
    jacobian: str = "fd"  # "fd" or "analytic" (two-parameter map only)
    fd_rel_step: float = 1e-6
    max_halvings: int = 12
    # Three-parameter problem only.
    a_min: float = 0.05
    lambda_scan_points: int = 8
    lambda_scan_span: tuple[float, float] = (1e-3, 10.0)

    def __post_init__(self):
        if self.jacobian not in ("fd", "analytic"):
            raise ValueError(f"jacobian must be 'fd' or 'analytic', got {self.jacobian!r}")


THREE_DEFAULTS = NewtonOptions(tol=1e-11)


@dataclass(frozen=True)
class Seed:
    M0: float
    a0: float


@dataclass(frozen=True)
class ReconResult:
    params: SpacetimeParams
    iterations: int
    final_residual: float
    jacobian_det: float
    stability_constant: float
    residual_history: tuple[float, ...] = field(default=(), repr=False)
    sign_ambiguous: bool = False
    seed: tuple[float, ...] = ()


# -- finite differences -------------------------------------------------------


def _central(func: VectorMap, x: np.ndarray, steps: np.ndarray, forward: np.ndarray) -> np.ndarray:
    f0 = None
    cols = []
    for i, h in enumerate(steps):
        xp = x.copy()
        xp[i] += h
        fp = np.asarray(func(xp), dtype=float)
        if forward[i]:
            # Second-order one-sided stencil, same O(h^2) error as the central one.
            if f0 is None:
                f0 = np.asarray(func(x), dtype=float)
            xpp = x.copy()
            xpp[i] += 2.0 * h
            cols.append((-3.0 * f0 + 4.0 * fp - np.asarray(func(xpp), dtype=float)) / (2.0 * h))
        else:
            xm = x.copy()
            xm[i] -= h
            cols.append((fp - np.asarray(func(xm), dtype=float)) / (2.0 * h))
    return np.column_stack(cols)


def numeric_jacobian(
    func: VectorMap,
    x: Sequence[float],
    rel_step: float = 1e-6,
    richardson: bool = False,
    lower: Sequence[float] | None = None,
) -> np.ndarray:
    """Finite-difference Jacobian of a vector map.

    The step in coordinate i is ``rel_step * max(1, |x_i|)``.  Differences
    are central unless ``lower`` is given and ``x_i - h`` would fall below
    ``lower[i]``, in which case a second-order forward stencil is used.  With
    ``richardson=True`` the step is halved once and the two estimates are
    combined to cancel the O(h^2) term.
    """
    x = np.asarray(x, dtype=float)
    steps = rel_step * np.maximum(1.0, np.abs(x))
    if lower is None:
        forward = np.zeros(len(x), dtype=bool)
    else:
        forward = x - steps < np.asarray(lower, dtype=float)
    J = _central(func, x, steps, forward)
    if richardson:
        J_half = _central(func, x, steps / 2.0, forward)
        J = (4.0 * J_half - J) / 3.0
    return J


def stability_ratio(J: np.ndarray) -> tuple[float, float]:
    """(det J, ||J|| / |det J|); for 2x2 matrices the ratio bounds ||J^-1||."""
    det = float(np.linalg.det(J))
    norm = float(np.linalg.norm(J, 2))
    return det, (norm / abs(det) if det != 0.0 else math.inf)


# -- two-parameter problem ----------------------------------------------------


def closed_form_seed(U: float, V: float, Lambda: float) -> Seed:
    """Leading-order inverse of (M, a) -> (U, V)."""
    s = Lambda + 3.0 * U * U
    if s <= 0.0:
        raise OutOfRange(f"Lambda + 3 U^2 = {s!r} must be positive")
    M0 = 1.0 / (3.0 * math.sqrt(s))
    if not 9.0 * Lambda * M0 * M0 < 1.0:
        raise OutOfRange(f"seed M0={M0!r} has 9*Lambda*M0^2 >= 1")
    c_Z = (2.0 + 9.0 * Lambda * M0 * M0) / (27.0 * M0 * M0)
    return Seed(M0, V / c_Z)


def _two_map(Lambda: float, n: int, ell: int) -> VectorMap:
    def f(x):
        return np.array(two_mode_map(SpacetimeParams(x[0], x[1], Lambda), n, ell))

    return f


def two_mode_jacobian_analytic(params: SpacetimeParams, ell: int | float) -> np.ndarray:
    """d(U, V)/d(M, a) through implicit differentiation of both orbits."""
    d_plus = orbit_parameter_derivatives(params, solve_circular_orbit(params, Branch.CO))[1]
    d_minus = -orbit_parameter_derivatives(params, solve_circular_orbit(params, Branch.COUNTER))[1]
    f = ell_factor(ell)
    return f * 0.5 * np.vstack([d_plus + d_minus, d_plus - d_minus])


def _admissible_point(x: np.ndarray, Lambda: float) -> bool:
    return x[0] > 0.0 and 9.0 * Lambda * x[0] * x[0] < 1.0


def _newton(
    residual: VectorMap,
    jacobian: VectorMap,
    x0: np.ndarray,
    opts: NewtonOptions,
    admissible: Callable[[np.ndarray], bool],
    guard: Callable[[np.ndarray, float], None],
):
    """Damped Newton iteration; returns (x, iterations, history, J_last)."""
    x = np.array(x0, dtype=float)
    F = residual(x)
    res = float(np.max(np.abs(F)))
    history = [res]
    it = 0
    while res > opts.tol:
        if it >= opts.max_iter:
            raise NoConvergence(f"Newton: residual {res:.3e} after {it} iterations")
        J = jacobian(x)
        det = float(np.linalg.det(J))
        guard(x, det)
        step = np.linalg.solve(J, -F)
        t = 1.0
        for _ in range(opts.max_halvings + 1):
            x_new = x + t * step
            if admissible(x_new):
                try:
                    F_new = residual(x_new)
                except KdsError:
                    F_new = None
                if F_new is not None and float(np.max(np.abs(F_new))) < res:
                    break
            t *= 0.5
        else:
            raise NoConvergence(f"Newton line search failed at residual {res:.3e}")
        x, F = x_new, F_new
        res = float(np.max(np.abs(F)))
        history.append(res)
        it += 1
    return x, it, history


def newton_invert_two(
    data: TwoModeObservables | Sequence[float],
    Lambda: float,
    ell: int,
    n: int = 0,
    opts: NewtonOptions | None = None,
) -> ReconResult:
    """Recover (M, a) at fixed Lambda from labelled (U, V) data.

    Raises
    ------
    OutOfRange
        The closed-form seed is not admissible.
    SingularJacobian
        |det D(U, V)| < 0.5 |Omega_ph' c_Z| at an iterate.
    NoConvergence
        Residual above ``opts.tol`` after ``opts.max_iter`` steps.
    """
    opts = opts or NewtonOptions()
    target = np.asarray(tuple(data), dtype=float)
    seed = closed_form_seed(target[0], target[1], Lambda)
    fmap = _two_map(Lambda, n, ell)

    def residual(x):
        return fmap(x) - target

    if opts.jacobian == "analytic":
        def jacobian(x):
            return two_mode_jacobian_analytic(SpacetimeParams(x[0], x[1], Lambda), ell)
    else:
        def jacobian(x):
            return numeric_jacobian(fmap, x, opts.fd_rel_step)

    def guard(x, det):
        c = closed_form_coefficients(x[0], Lambda)
        floor = 0.5 * abs(c.Omega_ph_prime * c.c_Z)
        if abs(det) < floor:
            raise SingularJacobian(f"|det D(U,V)| = {abs(det):.3e} below {floor:.3e} at M={x[0]!r}, a={x[1]!r}")

    x, it, history = _newton(
        residual, jacobian, np.array([seed.M0, seed.a0]), opts,
        lambda x: _admissible_point(x, Lambda), guard,
    )
    det, stab = stability_ratio(jacobian(x))
    return ReconResult(
        params=SpacetimeParams(x[0], x[1], Lambda),
        iterations=it,
        final_residual=history[-1],
        jacobian_det=det,
        stability_constant=stab,
        residual_history=tuple(history),
        seed=(seed.M0, seed.a0),
    )


def unlabeled_invert(
    U: float,
    absV: float,
    Lambda: float,
    ell: int,
    n: int = 0,
    opts: NewtonOptions | None = None,
) -> ReconResult:
    """Recover (M, |a|) from the unordered equatorial pair.

    Swapping the two labels is the same as flipping the sign of a, so only
    |a| is determined; the non-negative representative is reported.
    """
    if absV < 0.0:
        raise ValueError(f"absV must be non-negative, got {absV!r}")
    result = newton_invert_two((U, absV), Lambda, ell, n, opts)
    p = result.params
    return replace(
        result,
        params=SpacetimeParams(p.M, abs(p.a), p.Lambda),
        sign_ambiguous=absV > 0.0,
    )


# -- three-parameter problem --------------------------------------------------


def three_det_leading(M: float, Lambda: float) -> float:
    """Coefficient of a^2 in det D(U_geo, V_geo, lambda_+)/D(M, a, Lambda)."""
    return 5.0 * (9.0 * Lambda * M * M - 4.0) / (1458.0 * M ** 5)


def _three_map(n: int, ell: int) -> VectorMap:
    def f(x):
        return np.array(three_map(SpacetimeParams(x[0], x[1], x[2]), n, ell))

    return f


def _lambda_scan(target: np.ndarray, ell: int, n: int, opts: NewtonOptions):
    U = target[0]
    lo, hi = opts.lambda_scan_span
    base = 3.0 * U * U
    grid = np.logspace(math.log10(base * lo), math.log10(base * hi), opts.lambda_scan_points)
    inner = replace(opts, tol=1e-12, jacobian="fd")
    best = None
    for lam in grid:
        try:
            rec = newton_invert_two(target[:2], float(lam), ell, n, inner)
            W = three_map(rec.params, n, ell).W_tilde
        except KdsError:
            continue
        miss = abs(W - target[2])
        if best is None or miss < best[0]:
            best = (miss, rec.params)
    if best is None:
        raise NoConvergence("Lambda scan: no scan point admitted a two-parameter solution")
    return best[1]


def newton_invert_three(
    data: ThreeObservables | Sequence[float],
    ell: int,
    n: int = 0,
    opts: NewtonOptions | None = None,
) -> ReconResult:
    """Recover (M, a, Lambda) from (U, V, W_tilde).

    Initialisation: for each of ``opts.lambda_scan_points`` log-spaced Lambda
    values the two-parameter problem is solved for (M, a); the scan point whose
    predicted W_tilde is closest to the data seeds a 3D Newton iteration.

    Raises
    ------
    NearDegenerate
        |a| of the seed below ``opts.a_min``, or |det| below 10% of the
        leading a^2 law at an iterate.
    NoConvergence
        Scan or Newton failure.
    """
    opts = opts or THREE_DEFAULTS
    target = np.asarray(tuple(data), dtype=float)
    if abs(target[1]) <= 0.0:
        raise NearDegenerate("V = 0: the three-parameter map is degenerate at a = 0")
    start = _lambda_scan(target, ell, n, opts)
    if abs(start.a) < opts.a_min:
        raise NearDegenerate(f"seed |a| = {abs(start.a):.3e} below a_min = {opts.a_min!r}")

    fmap = _three_map(n, ell)

    def residual(x):
        return fmap(x) - target

    def jacobian(x):
        return numeric_jacobian(fmap, x, opts.fd_rel_step)

    def guard(x, det):
        floor = 0.1 * abs(three_det_leading(x[0], x[2])) * x[1] * x[1]
        if abs(det) < floor:
            raise NearDegenerate(f"|det DH| = {abs(det):.3e} below {floor:.3e} at a={x[1]!r}")

    def admissible(x):
        return x[0] > 0.0 and x[2] > 0.0 and 9.0 * x[2] * x[0] * x[0] < 1.0

    x0 = np.array(start.as_tuple())
    x, it, history = _newton(residual, jacobian, x0, opts, admissible, guard)
    J = jacobian(x)
    det = float(np.linalg.det(J))
    # ||J^-1|| bounded via the adjugate: ||J^-1|| <= ||adj J|| / |det J|.
    stab = float(np.linalg.norm(np.linalg.inv(J), 2)) if det != 0.0 else math.inf
    return ReconResult(
        params=SpacetimeParams(*x),
        iterations=it,
        final_residual=history[-1],
        jacobian_det=det,
        stability_constant=stab,
        residual_history=tuple(history),
        seed=tuple(x0),
    )


# -- grid diagnostics ---------------------------------------------------------


class StabilityConstants(NamedTuple):
    c_star: float
    L_star: float
    C_star: float
    nodes_used: int
    nodes_filtered: int


def stability_constants(
    func: VectorMap,
    M_values: Sequence[float],
    a_values: Sequence[float],
    Lambda: float,
    rel_step: float = 1e-6,
) -> StabilityConstants:
    """Sampled c_* = min |det J|, L_* = max ||J||_2 and C_* = L_* / c_*.

    Nodes outside the admissible set, or where the map raises, are dropped.
    These are finite-sample estimates, not certified bounds.
    """
    dets, norms = [], []
    filtered = 0
    for M in M_values:
        for a in a_values:
            x = np.array([M, a], dtype=float)
            if not _admissible_point(x, Lambda):
                filtered += 1
                continue
            try:
                J = numeric_jacobian(func, x, rel_step)
            except KdsError:
                filtered += 1
                continue
            dets.append(abs(float(np.linalg.det(J))))
            norms.append(float(np.linalg.norm(J, 2)))
    if not dets:
        raise EmptyRegion("no admissible grid node")
    c_star = min(dets)
    L_star = max(norms)
    return StabilityConstants(c_star, L_star, L_star / c_star if c_star > 0 else math.inf, len(dets), filtered)


@dataclass(frozen=True)
class RectangleSpec:
    M_min: float
    M_max: float
    a_min: float
    a_max: float
    n_M: int = 21
    n_a: int = 21

    def nodes(self):
        Ms = np.linspace(self.M_min, self.M_max, self.n_M) if self.n_M > 1 else np.array([self.M_min])
        As = np.linspace(self.a_min, self.a_max, self.n_a) if self.n_a > 1 else np.array([self.a_min])
        return [(float(M), float(a)) for M in Ms for a in As]


class PMatrixNode(NamedTuple):
    M: float
    a: float
    U: float
    V: float
    minus_dU_dM: float
    dV_da: float
    minus_det: float
    ok: bool


@dataclass(frozen=True)
class PMatrixReport:
    nodes: tuple[PMatrixNode, ...]
    passed: bool
    minors_ok: bool
    worst_minus_dU_dM: float
    worst_dV_da: float
    worst_minus_det: float
    truncated: bool
    nodes_filtered: int
    collisions: int
    min_separation: float


def p_matrix_rectangle_scan(
    rect: RectangleSpec,
    Lambda: float,
    ell: int,
    n: int = 0,
    probe_tol: float = 1e-9,
    rel_step: float = 1e-6,
) -> PMatrixReport:
    """Check that diag(-1, 1) D(U, V) is a P-matrix at every node of a rectangle.

    Positive principal minors everywhere on a rectangle give injectivity
    there (Gale-Nikaido).  A brute-force probe additionally looks for two
    nodes whose images lie within ``probe_tol`` of each other.
    """
    fmap = _two_map(Lambda, n, ell)
    rows = []
    filtered = 0
    for M, a in rect.nodes():
        x = np.array([M, a])
        if not _admissible_point(x, Lambda):
            filtered += 1
            continue
        try:
            value = fmap(x)
            J = numeric_jacobian(fmap, x, rel_step)
        except KdsError:
            filtered += 1
            continue
        m1 = -J[0, 0]
        m2 = J[1, 1]
        m3 = -float(np.linalg.det(J))
        rows.append(PMatrixNode(M, a, float(value[0]), float(value[1]), float(m1), float(m2), m3, m1 > 0 and m2 > 0 and m3 > 0))
    if not rows:
        raise EmptyRegion("no admissible node in the rectangle")

    images = np.array([[r.U, r.V] for r in rows])
    if len(images) > 1:
        diff = images[:, None, :] - images[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
        iu = np.triu_indices(len(images), k=1)
        pair_dist = dist[iu]
        collisions = int(np.count_nonzero(pair_dist <= probe_tol))
        min_sep = float(pair_dist.min())
    else:
        collisions, min_sep = 0, math.inf

    minors_ok = all(r.ok for r in rows)
    return PMatrixReport(
        nodes=tuple(rows),
        passed=minors_ok and collisions == 0,
        minors_ok=minors_ok,
        worst_minus_dU_dM=min(r.minus_dU_dM for r in rows),
        worst_dV_da=min(r.dV_da for r in rows),
        worst_minus_det=min(r.minus_det for r in rows),
        truncated=filtered > 0,
        nodes_filtered=filtered,
        collisions=collisions,
        min_separation=min_sep,
    )
