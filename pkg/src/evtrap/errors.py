"""Exception types shared across the toolkit.

All numerical failures derive from :class:`NumericalError` so the CLI can map
them onto a single exit code; configuration problems derive from
:class:`ConfigError`.
"""


class EvtrapError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(EvtrapError):
    """Invalid or inconsistent configuration input."""


class NumericalError(EvtrapError):
    """A numerical routine could not produce a trustworthy result."""


class NoMinimum(NumericalError):
    """No interior potential minimum exists in the search window."""


class CalibrationFailed(NumericalError):
    """Tweezer calibration could not meet its targets within tolerance."""


class StepTooLarge(NumericalError):
    """A trajectory step exceeded the resolution guard; refine dt."""


class NoBarrier(NumericalError):
    """The potential has no barrier between the trap and the surface."""


class FitDegenerate(NumericalError):
    """A fit problem is rank deficient or otherwise unsolvable."""


class BadWindow(NumericalError):
    """The data window does not bracket the feature being fitted."""


class NonPhysical(NumericalError):
    """An input value lies outside the physically meaningful domain."""


class EmptyCondition(NumericalError):
    """Conditioning removed every event from the analysis."""


class NoCrossing(NumericalError):
    """A survival curve never crosses the requested threshold."""
