"""Semantic exception hierarchy shared by all estimators.

Every failure mode that callers are expected to branch on gets its own
class; plain contract violations (bad shapes, malformed inputs) raise
ValidationError.
"""


class EffectRestoreError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(EffectRestoreError, ValueError):
    """Input violates a structural contract (shape, domain, normalization)."""


class SingularError(EffectRestoreError):
    """The error mechanism is non-invertible (or too ill-conditioned to invert)."""


class IncompatibleModelError(EffectRestoreError):
    """Observed data and postulated error mechanism cannot coexist.

    Raised when restoration produces negative probability mass beyond
    tolerance: the postulated mechanism contradicts the observed
    distribution, so no estimate exists.
    """


class PositivityError(EffectRestoreError):
    """A confounder stratum with positive mass never receives the treatment value."""


class DegenerateStratumError(EffectRestoreError):
    """A restored stratum has vanishing probability, so conditioning on it fails."""


class DegenerateDenominatorError(EffectRestoreError):
    """A denominator of a closed-form estimator vanishes; names the quantity."""


class UnidentifiableError(EffectRestoreError):
    """The requested coefficient is not identified from the supplied moments."""


class InvalidErrorVarianceError(EffectRestoreError):
    """Postulated proxy error variance is inconsistent with the observed variance."""
