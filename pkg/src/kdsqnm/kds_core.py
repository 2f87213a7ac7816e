"""Kerr-de Sitter parameters, the horizon quartic and equatorial metric data.

Geometric units G = c = 1 throughout.  The horizon function is

    Delta_r(r) = (r^2 + a^2)(1 - Lambda r^2 / 3) - 2 M r
               = -(Lambda/3) r^4 + (1 - Lambda a^2/3) r^2 - 2 M r + a^2,

and only its restriction to the equatorial plane theta = pi/2 is needed here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .errors import DegenerateRoot, KdsError, NotSubextremal, OutOfRange

# Roots whose imaginary part is below this (relative) level are treated as
# real candidates and handed to the Newton polisher; a true complex pair that
# survives this filter collapses onto one real value and trips the degeneracy
# check instead.
_IMAG_TOL = 1e-7
_POLISH_STEPS = 3
_DEGENERATE_GAP = 1e-9
_RESIDUAL_FACTOR = 1e-12


@dataclass(frozen=True)
class SpacetimeParams:
    """Parameter vector (M, a, Lambda).

    ``a`` may take either sign.  ``Lambda = 0`` is accepted so that pure Kerr
    cross-checks can be run through the same code paths.
    """

    M: float
    a: float
    Lambda: float

    def __post_init__(self):
        for name in ("M", "a", "Lambda"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.M <= 0.0:
            raise ValueError(f"M must be positive, got {self.M!r}")
        if self.Lambda < 0.0:
            raise ValueError(f"Lambda must be non-negative, got {self.Lambda!r}")

    @property
    def Xi(self) -> float:
        return 1.0 + self.Lambda * self.a * self.a / 3.0

    def with_a(self, a: float) -> "SpacetimeParams":
        return SpacetimeParams(self.M, a, self.Lambda)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.M, self.a, self.Lambda)


def quartic_coefficients(params: SpacetimeParams) -> tuple[float, float, float, float, float]:
    """Coefficients of Delta_r, highest degree first."""
    M, a, lam = params.as_tuple()
    return (-lam / 3.0, 0.0, 1.0 - lam * a * a / 3.0, -2.0 * M, a * a)


def evaluate_delta_r(params: SpacetimeParams, r: float, order: int = 0) -> float:
    """Delta_r or one of its first two r-derivatives, evaluated exactly (Horner)."""
    c4, _, c2, c1, c0 = quartic_coefficients(params)
    if order == 0:
        return (((c4 * r) * r + c2) * r + c1) * r + c0
    if order == 1:
        return ((4.0 * c4 * r) * r + 2.0 * c2) * r + c1
    if order == 2:
        return 12.0 * c4 * r * r + 2.0 * c2
    raise ValueError(f"order must be 0, 1 or 2, got {order!r}")


@dataclass(frozen=True)
class HorizonData:
    """The four real roots of Delta_r and the outer-horizon data derived from them.

    With ``Lambda = 0`` there is no cosmological horizon: ``r_c`` and ``L_sep``
    are ``+inf``, ``r0`` is ``-inf``, ``kappa_c`` is 0 and the condition is
    recorded in ``diagnostics``.
    """

    r0: float
    r_minus: float
    r_e: float
    r_c: float
    kappa_e: float
    kappa_c: float
    L_sep: float
    residuals: float
    diagnostics: tuple[str, ...] = field(default=())


def _polish(params: SpacetimeParams, r: float) -> float:
    for _ in range(_POLISH_STEPS):
        d1 = evaluate_delta_r(params, r, 1)
        if d1 == 0.0:
            break
        step = evaluate_delta_r(params, r, 0) / d1
        r -= step
        if step == 0.0:
            break
    return r


def _surface_gravity(params: SpacetimeParams, r_h: float) -> float:
    return abs(evaluate_delta_r(params, r_h, 1)) / (2.0 * (r_h * r_h + params.a * params.a))


def _kerr_horizons(params: SpacetimeParams) -> HorizonData:
    M, a = params.M, params.a
    disc = M * M - a * a
    if disc <= 0.0:
        raise NotSubextremal(f"|a| >= M at Lambda=0 (M={M!r}, a={a!r}): no event horizon")
    root = math.sqrt(disc)
    r_e = M + root
    # Product form avoids cancellation for small a.
    r_minus = a * a / r_e
    if r_e - r_minus <= _DEGENERATE_GAP * r_e:
        raise DegenerateRoot(f"r_minus and r_e coincide to {r_e - r_minus:.3e}")
    r_e = _polish(params, r_e)
    diagnostics = ["missing cosmological horizon (Lambda=0): r_c reported as +inf"]
    if a == 0.0:
        diagnostics.append("r_minus degenerate at a=0")
    residual = max(abs(evaluate_delta_r(params, r)) for r in (r_minus, r_e))
    return HorizonData(
        r0=-math.inf,
        r_minus=r_minus,
        r_e=r_e,
        r_c=math.inf,
        kappa_e=_surface_gravity(params, r_e),
        kappa_c=0.0,
        L_sep=math.inf,
        residuals=residual,
        diagnostics=tuple(diagnostics),
    )


def _term(c: float, r: float, power: int) -> float:
    # |c| |r|^power, multiplied out so that tiny c and huge r do not overflow.
    out = abs(c)
    for _ in range(power):
        out *= abs(r)
    return out


@lru_cache(maxsize=4096)
def horizon_roots(params: SpacetimeParams) -> HorizonData:
    """Find, polish and validate the four horizon roots.

    Roots come from companion-matrix eigenvalues (``numpy.roots``) of Delta_r
    and of its reversal, and are refined by three Newton steps on Delta_r.

    Raises
    ------
    NotSubextremal
        Fewer than four real roots, or the order r0 < 0 <= r_- < r_e < r_c fails.
    DegenerateRoot
        Two roots closer than 1e-9 * min(r_c - r_e, r_e).
    OutOfRange
        Lambda so small that the companion matrix overflows.
    """
    if params.Lambda == 0.0:
        return _kerr_horizons(params)

    coeffs = quartic_coefficients(params)
    c4, _, _, c1, c0 = coeffs
    # Disparate scales: the outer pair (r0, r_c) grows like sqrt(3/Lambda) and
    # r_- shrinks like a^2 / (2M), while companion eigenvalues are only
    # accurate relative to the largest one.  Hence the outer pair comes from
    # Delta_r, r_- from the reversed polynomial (roots 1/r), and r_e from the
    # product of the roots, which involves no cancellation.
    try:
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            forward = np.roots(coeffs)
            reverse = np.roots(coeffs[::-1])
    except np.linalg.LinAlgError:
        forward = np.array([np.nan])
    if not np.all(np.isfinite(forward)):
        raise OutOfRange(
            f"Lambda={params.Lambda!r} too small to resolve the cosmological horizon in double precision; "
            "pass Lambda=0 for Kerr"
        )
    # a^2 == 0 (also when a^2 underflows): Delta_r = r * cubic, zero root exact.
    zero_root = c0 == 0.0
    z0, zc = sorted(forward, key=abs)[-2:]
    if zero_root:
        z_minus = 0j
        z_e = (-c1 / (c4 * z0)) / zc
    else:
        z_minus = 1.0 / complex(max(reverse, key=abs))
        z_e = ((c0 / z_minus) / (c4 * z0)) / zc
    candidates = (complex(z0), complex(zc), complex(z_minus), complex(z_e))
    real = sorted(z.real for z in candidates if abs(z.imag) <= _IMAG_TOL * max(1.0, abs(z)))
    if len(real) != 4:
        raise NotSubextremal(
            f"Delta_r has {len(real)} real roots, need 4 "
            f"(9*Lambda*M^2 = {9.0 * params.Lambda * params.M ** 2:.6g})"
        )

    if zero_root:
        i0 = min(range(4), key=lambda i: abs(real[i]))
        real[i0] = 0.0
        roots = sorted(r if i == i0 else _polish(params, r) for i, r in enumerate(real))
    else:
        roots = sorted(_polish(params, r) for r in real)
    r0, r_minus, r_e, r_c = roots

    if not (r0 < 0.0 <= r_minus):
        raise NotSubextremal(
            f"root ordering violated: r0={r0!r}, r_-={r_minus!r}, r_e={r_e!r}, r_c={r_c!r}"
        )
    # Sorted, so the only remaining way to break the order is coincidence.
    # The gap scale is capped at r_e: for small Lambda, L_sep ~ sqrt(3/Lambda)
    # dwarfs the inner pair and would flag every spin as near-extremal.
    L_sep = r_c - r_e
    gaps = [roots[i + 1] - roots[i] for i in range(3)]
    if min(gaps) <= _DEGENERATE_GAP * min(L_sep, r_e):
        raise DegenerateRoot(f"horizon roots coincide to {min(gaps):.3e} (near-extremal)")

    residual = max(abs(evaluate_delta_r(params, r)) for r in roots)
    # Scale by the size of the terms at each root; for small Lambda the outer
    # roots grow like sqrt(3/Lambda) and Sum|c_k| alone is not attainable.
    term_scale = max(sum(_term(c, r, 4 - k) for k, c in enumerate(coeffs)) for r in roots)
    bound = _RESIDUAL_FACTOR * max(1.0, sum(abs(c) for c in coeffs), term_scale)
    if residual > bound:
        raise DegenerateRoot(f"root residual {residual:.3e} exceeds {bound:.3e}")

    diagnostics = ("r_minus degenerate at a=0",) if zero_root else ()
    return HorizonData(
        r0=r0,
        r_minus=r_minus,
        r_e=r_e,
        r_c=r_c,
        kappa_e=_surface_gravity(params, r_e),
        kappa_c=_surface_gravity(params, r_c),
        L_sep=L_sep,
        residuals=residual,
        diagnostics=diagnostics,
    )


class Admissibility(NamedTuple):
    ok: bool
    diagnostic: str


def is_subextremal(params: SpacetimeParams) -> Admissibility:
    """Check the horizon structure and the photon-orbit guards for both branches.

    Never raises for domain problems; the diagnostic names the first failed
    condition (or carries informational notes when ``ok`` is true).
    """
    from .photon_orbit import Branch, solve_circular_orbit

    x = 9.0 * params.Lambda * params.M ** 2
    if x >= 1.0:
        return Admissibility(False, "9ΛM² ≥ 1")
    try:
        horizons = horizon_roots(params)
    except KdsError as exc:
        return Admissibility(False, f"{type(exc).__name__}: {exc}")
    for branch in Branch:
        try:
            solve_circular_orbit(params, branch)
        except KdsError as exc:
            return Admissibility(False, f"{branch.value} orbit: {type(exc).__name__}: {exc}")
    return Admissibility(True, "; ".join(horizons.diagnostics))


@dataclass(frozen=True)
class EquatorialMetric:
    g_tt: float
    g_tphi: float
    g_phiphi: float


def equatorial_metric(params: SpacetimeParams, r: float) -> EquatorialMetric:
    """Boyer-Lindquist (t, phi) block of the metric at theta = pi/2."""
    if r <= 0.0:
        raise ValueError(f"r must be positive, got {r!r}")
    a = params.a
    xi = params.Xi
    delta = evaluate_delta_r(params, r)
    q = r * r + a * a
    r2 = r * r
    if a == 0.0:
        # Schwarzschild-de Sitter form, g_tt = -f(r).
        f = 1.0 - 2.0 * params.M / r - params.Lambda * r2 / 3.0
        return EquatorialMetric(-f, 0.0, r2)
    return EquatorialMetric(
        g_tt=(a * a - delta) / r2,
        g_tphi=a * (delta - q) / (r2 * xi),
        g_phiphi=(q * q - a * a * delta) / (r2 * xi * xi),
    )
