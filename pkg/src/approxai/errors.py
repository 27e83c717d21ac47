"""Exception types raised across the package."""


class ApproxAIError(Exception):
    """Base class for all library errors."""


class NonFiniteError(ApproxAIError, ValueError):
    """An arithmetic operand was NaN or infinite."""


class LevelError(ApproxAIError, ValueError):
    """Approximation level outside [0, 11]."""


class EnergyTableError(ApproxAIError, ValueError):
    pass


class BadLengthError(ApproxAIError, ValueError):
    """Signal length is not a power of two."""


class ScheduleMismatchError(ApproxAIError, ValueError):
    """Level schedule length does not match log2 of the signal length."""


class LengthMismatchError(ApproxAIError, ValueError):
    pass


class EmptyMatrixError(ApproxAIError, ValueError):
    pass


class ShapeMismatchError(ApproxAIError, ValueError):
    pass


class NonFiniteWeightsError(ApproxAIError, ValueError):
    pass


class ParseError(ApproxAIError, ValueError):
    """Input file could not be parsed; the message names the offending field or line."""


class SchemaVersionError(ApproxAIError, ValueError):
    pass


class DegenerateInputError(ApproxAIError, ValueError):
    pass


class IndexOutOfBoundsError(ApproxAIError, IndexError):
    pass


class DuplicateNodesError(ApproxAIError, ValueError):
    pass


class SingularMatrixError(ApproxAIError, ValueError):
    pass


class FeatureInSubsetError(ApproxAIError, ValueError):
    pass


class OutOfRangeError(ApproxAIError, ValueError):
    pass


class TooManyFeaturesError(ApproxAIError, ValueError):
    pass


class InfeasibleError(ApproxAIError):
    """No approximation schedule satisfies the constraints."""


class EmptySamplesError(ApproxAIError, ValueError):
    pass
