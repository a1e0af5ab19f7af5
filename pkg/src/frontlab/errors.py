"""Exception types shared by all frontlab modules."""


class FrontlabError(Exception):
    """Base class for every error raised by frontlab."""


class InvalidParam(FrontlabError):
    """Parameters outside their admissible range."""


class NonSymmetric(FrontlabError):
    """Tabulated kernel data is not symmetric about the origin."""


class NotUnimodal(FrontlabError):
    """Tabulated kernel data is not nonincreasing away from the origin."""


class NonNormalizable(FrontlabError):
    """Tabulated kernel data has no positive finite mass."""


class RateOutOfRange(FrontlabError):
    """Exponential rate at or beyond the finite-moment window."""


class QuadratureFailure(FrontlabError):
    """Adaptive quadrature did not reach the requested tolerance."""


class HalfWidthOverflow(FrontlabError):
    """Discrete stencil would exceed the configured maximum half width."""


class Reducible(FrontlabError):
    """Coupling digraph is not strongly connected."""


class NoConvergence(FrontlabError):
    """Iterative solver exhausted its iteration budget."""


class BoundaryMinimum(FrontlabError):
    """Speed-curve minimizer sits on the search bracket edge."""


class InvalidRates(FrontlabError):
    """Initial-data decay rates or amplitudes are not positive."""


class UnstableStep(FrontlabError):
    """Time step produced clamping beyond the roundoff budget."""


class DomainTooSmall(FrontlabError):
    """Front came too close to the truncated domain boundary."""


class NoCrossing(FrontlabError):
    """Profile does not cross the tracking threshold on the requested side."""


class InsufficientData(FrontlabError):
    """Not enough trace points inside the fitting window."""


class DominationImpossible(FrontlabError):
    """Initial data cannot be dominated by the requested exponential."""


class ParseError(FrontlabError):
    """Config document is syntactically invalid."""


class ValidationError(FrontlabError):
    """Config document is well-formed but semantically invalid."""
