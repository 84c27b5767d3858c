"""Exception types raised across the toolkit."""


class BdftError(Exception):
    """Base class for all toolkit errors."""


class InvalidValue(BdftError, ValueError):
    """A value type was constructed with fields violating its invariants."""


class EmptySpec(InvalidValue):
    pass


class NyquistViolation(InvalidValue):
    pass


class ZeroSignal(InvalidValue):
    pass


class BandEmpty(InvalidValue):
    pass


class SnapCollision(InvalidValue):
    """Commensurate snapping could not keep component frequencies distinct."""


class NonCommensurate(InvalidValue):
    pass


class SampleRateTooLow(InvalidValue):
    pass


class OutOfRange(InvalidValue):
    pass


class InvalidResult(InvalidValue):
    pass


class ReferenceOverlap(InvalidValue):
    """Reference trajectory has power at a perturbation excitation bin."""


class TooFewPoints(InvalidValue):
    pass


class ZeroExcitation(InvalidValue):
    pass


class ZeroVariance(InvalidValue):
    pass


class DegenerateVariable(InvalidValue):
    pass


class NonConvergence(RuntimeWarning):
    """Emitted when a fit stops at the iteration limit."""


class SchemaError(BdftError, ValueError):
    """Input file does not follow the expected column/field layout."""


class ConfigError(BdftError, ValueError):
    """Experiment or command configuration failed validation."""
