"""Synthetic equatorial pseudopoles and the real observable maps built from them.

The frequency model for the equatorial mode with overtone n, angular index
ell and azimuthal number k = +-ell is

    omega = Omega_sharp(M, a) * (ell + 1/2) - i (n + 1/2) * lambda(M, a),

with Omega_sharp and lambda taken from the photon orbit of the matching
branch.  This reproduces the Schwarzschild-de Sitter lattice exactly at a = 0.
Higher symbol corrections are not modelled; perturbations enter only through
:class:`NoiseSpec`.  Note the deliberate (ell + 1/2) vs ell mismatch between
synthesis and the 1/ell normalisation of the observables: it is an exactly
known O(1/ell) offset that the inversion has to absorb.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .kds_core import SpacetimeParams
from .photon_orbit import Branch, solve_circular_orbit


@dataclass(frozen=True)
class ModeIndex:
    n: int
    ell: int
    branch: Branch = Branch.CO

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 0:
            raise ValueError(f"overtone n must be a non-negative integer, got {self.n!r}")
        if int(self.ell) != self.ell or self.ell < 1:
            raise ValueError(f"ell must be a positive integer, got {self.ell!r}")
        object.__setattr__(self, "branch", Branch.parse(self.branch))

    @property
    def k(self) -> int:
        return self.branch.sign * self.ell


class PseudopolePair(NamedTuple):
    plus: complex
    minus: complex


class TwoModeObservables(NamedTuple):
    U: float
    V: float


class SingleModeObservables(NamedTuple):
    W_tilde: float
    U_plus: float


class ThreeObservables(NamedTuple):
    U: float
    V: float
    W_tilde: float


@dataclass(frozen=True)
class NoiseSpec:
    eta_plus: complex = 0j
    eta_minus: complex = 0j


def synthesize_pseudopole(params: SpacetimeParams, mode: ModeIndex) -> complex:
    orbit = solve_circular_orbit(params, mode.branch)
    omega_sharp = mode.branch.sign * orbit.Omega
    return complex(omega_sharp * (mode.ell + 0.5), -(mode.n + 0.5) * orbit.lyapunov)


def pseudopole_pair(params: SpacetimeParams, n: int, ell: int) -> PseudopolePair:
    return PseudopolePair(
        synthesize_pseudopole(params, ModeIndex(n, ell, Branch.CO)),
        synthesize_pseudopole(params, ModeIndex(n, ell, Branch.COUNTER)),
    )


def apply_noise(pair: PseudopolePair, noise: NoiseSpec) -> PseudopolePair:
    return PseudopolePair(pair.plus + noise.eta_plus, pair.minus + noise.eta_minus)


# -- observables from a (possibly perturbed) pair ----------------------------


def two_mode_from_pair(pair: PseudopolePair, ell: int) -> TwoModeObservables:
    return TwoModeObservables(
        ((pair.plus + pair.minus) / (2 * ell)).real,
        ((pair.plus - pair.minus) / (2 * ell)).real,
    )


def single_mode_from_pair(pair: PseudopolePair, n: int, ell: int) -> SingleModeObservables:
    return SingleModeObservables(-pair.plus.imag / (n + 0.5), pair.plus.real / ell)


def three_from_pair(pair: PseudopolePair, n: int, ell: int) -> ThreeObservables:
    U, V = two_mode_from_pair(pair, ell)
    return ThreeObservables(U, V, single_mode_from_pair(pair, n, ell).W_tilde)


def unlabeled_from_pair(pair: PseudopolePair, ell: int) -> tuple[float, float]:
    U, V = two_mode_from_pair(pair, ell)
    return U, abs(V)


# -- observable maps of the parameters ---------------------------------------


def two_mode_map(params: SpacetimeParams, n: int, ell: int) -> TwoModeObservables:
    """Labelled equatorial package (U, V): normalised average and splitting."""
    return two_mode_from_pair(pseudopole_pair(params, n, ell), ell)


def single_mode_map(params: SpacetimeParams, n: int, ell: int) -> SingleModeObservables:
    """(W_tilde, U_plus) from the co-rotating mode alone."""
    omega = synthesize_pseudopole(params, ModeIndex(n, ell, Branch.CO))
    return SingleModeObservables(-omega.imag / (n + 0.5), omega.real / ell)


def three_map(params: SpacetimeParams, n: int, ell: int) -> ThreeObservables:
    return three_from_pair(pseudopole_pair(params, n, ell), n, ell)


def unlabeled_observables(params: SpacetimeParams, n: int, ell: int) -> tuple[float, float]:
    """(U, |V|): what survives when the two equatorial modes are not labelled."""
    return unlabeled_from_pair(pseudopole_pair(params, n, ell), ell)


# -- ell -> infinity (geometric) maps ----------------------------------------


def geometric_two_map(params: SpacetimeParams) -> TwoModeObservables:
    plus = solve_circular_orbit(params, Branch.CO).Omega
    minus = -solve_circular_orbit(params, Branch.COUNTER).Omega
    return TwoModeObservables(0.5 * (plus + minus), 0.5 * (plus - minus))


def geometric_three_map(params: SpacetimeParams) -> ThreeObservables:
    co = solve_circular_orbit(params, Branch.CO)
    minus = -solve_circular_orbit(params, Branch.COUNTER).Omega
    return ThreeObservables(0.5 * (co.Omega + minus), 0.5 * (co.Omega - minus), co.lyapunov)


def ell_factor(ell: int | float) -> float:
    """(ell + 1/2) / ell, the model's exact ratio between U_ell and U_geo."""
    if math.isinf(ell):
        return 1.0
    return (ell + 0.5) / ell
