"""Exception hierarchy shared across the package."""


class AttrShiftError(Exception):
    """Base class for all errors raised by attrshift."""


class InvalidScheduleParams(AttrShiftError):
    """Noise-schedule parameters violate their bounds."""


class StepOutOfRange(AttrShiftError):
    """Timestep index outside the schedule's valid range."""


class ShapeMismatch(AttrShiftError):
    """Two latent tensors that must share a shape do not."""


class DimMismatch(AttrShiftError):
    """A condition's dimensionality disagrees with the latent's."""


class NonPositiveVariance(AttrShiftError):
    """A Gaussian condition carries a variance <= 0."""


class EmptyMixture(AttrShiftError):
    """A mixture score was requested with no components."""


class WeightsNotNormalized(AttrShiftError):
    """Mixture weights are not positive or do not sum to one."""


class DegenerateDirection(AttrShiftError):
    """The two conditional scores coincide; no transition direction exists."""


class ZeroVector(AttrShiftError):
    """A cosine similarity was requested for a (near-)zero vector."""


class ConfigError(AttrShiftError):
    """A run configuration references conditions or modes it cannot resolve."""


class ParseError(AttrShiftError):
    """A scenario or config file could not be parsed."""


class ValidationError(AttrShiftError):
    """A parsed scenario or config violates an invariant."""
