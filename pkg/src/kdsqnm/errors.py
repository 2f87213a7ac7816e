"""Exception hierarchy.

Every error raised for a parameter point or data vector that lies outside the
model's admissible regime derives from :class:`KdsError`; the command line
maps these to exit code 2.
"""


class KdsError(Exception):
    """Base class for domain errors."""


class NotSubextremal(KdsError):
    """Delta_r does not have four distinct real roots in the required order."""


class DegenerateRoot(KdsError):
    """Two horizon roots are numerically coincident (near-extremal point)."""


class OutsideAdmissible(KdsError):
    """9 Lambda M^2 >= 1: no Schwarzschild-de Sitter photon sphere."""


class OutOfRange(KdsError):
    """An input or closed-form seed lies outside the numerically representable or admissible range."""


class NoConvergence(KdsError):
    """An iterative solver did not reach its tolerance."""


class DegenerateJacobian(KdsError):
    """The circular-orbit system Jacobian fell below the slow-rotation guard."""


class SingularJacobian(KdsError):
    """The two-parameter observable map is numerically singular."""


class NearDegenerate(KdsError):
    """The three-parameter map is too close to its a = 0 degeneracy."""


class HorizonEvaluation(KdsError):
    """A radial quantity was requested outside the exterior (r_e, r_c)."""


class NegativeCurvature(KdsError):
    """R'' <= 0 at a circular orbit: the orbit is not unstable."""


class EmptyRegion(KdsError):
    """No admissible grid node survived filtering."""


class IllConditionedFit(KdsError):
    """The (scaled) Vandermonde system of a series fit is ill conditioned."""
