"""Exception hierarchy shared by all subflow modules."""


class SubflowError(Exception):
    """Base class for every error raised by this package."""


class AssumptionViolation(SubflowError):
    """A standing hypothesis (primitivity, irreducibility, |theta_2| > 1, ...) fails."""


class NumericFailure(SubflowError):
    """A numerical routine could not deliver a result at the requested accuracy."""


class ConfigError(SubflowError):
    """Invalid experiment configuration."""


class LengthCapExceeded(NumericFailure):
    pass


class NoReturnWordFound(SubflowError):
    pass


class DegreeTooLarge(SubflowError):
    pass


class RepeatedRoots(NumericFailure):
    pass


class SingularVandermonde(NumericFailure):
    pass


class DegenerateDual(NumericFailure):
    pass


class PrefixTooShort(NumericFailure):
    pass


class NonPositiveValue(NumericFailure):
    pass


class NoDecay(NumericFailure):
    pass


class OmegaOutOfRange(SubflowError):
    pass


class Overflow(NumericFailure):
    pass


class MeanNotZero(SubflowError):
    pass


class GridTooCoarse(NumericFailure):
    pass


class ParseError(ConfigError):
    pass


class SchemaError(ConfigError):
    pass
