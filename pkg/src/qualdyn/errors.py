"""Exception types shared across the package."""


class QualdynError(Exception):
    """Base class for all package-specific errors."""


class DivergenceError(QualdynError):
    """A state, derivative or expression evaluated to a non-finite value.

    Carries the offending state vector and, when known, the time of failure.
    """

    def __init__(self, message, state=None, time=None):
        super().__init__(message)
        self.state = state
        self.time = time


class StiffnessError(QualdynError):
    """Adaptive step size underflowed; the problem is too stiff for an
    explicit integrator at the requested tolerances."""


class DegenerateFrameError(QualdynError):
    """Tangent frame columns collapsed to linear dependence."""


class CovarianceError(QualdynError):
    """A covariance matrix could not be factorized even after jitter."""


class ObservationError(QualdynError):
    """The observation function failed on every sigma point."""


class RegimeLostError(QualdynError):
    """The filter spent too many consecutive iterations entirely inside a
    divergent (penalty) region of parameter space."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class UnboundedDimensionError(QualdynError):
    """All partial sums of the spectrum are non-negative, so the
    Kaplan-Yorke formula has no terminating index."""


class ModelLookupError(QualdynError, KeyError):
    """Unknown model name; message lists the available models."""


class ParseError(QualdynError):
    """Model-text syntax or resolution error with source location."""

    def __init__(self, message, line, column):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class ValidationError(QualdynError):
    """Experiment configuration failed validation.

    ``field`` is the dotted path of the offending entry.
    """

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field
