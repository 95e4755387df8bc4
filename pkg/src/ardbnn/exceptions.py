"""Exception hierarchy shared by all ardbnn modules."""


class ArdBnnError(Exception):
    """Base class for every error raised by this package."""


class InputShapeError(ArdBnnError, ValueError):
    """Array or list dimensions disagree with the network or grouping."""


class EmptyInputError(ArdBnnError, ValueError):
    """An operation that needs at least one row or sample got none."""


class DataParseError(ArdBnnError, ValueError):
    """A data file could not be parsed; the message names the row/column."""


class UndefinedMetricError(ArdBnnError, ValueError):
    """A metric is undefined for the given labels (e.g. AUC with one class)."""


class UnsupportedModelError(ArdBnnError, ValueError):
    """The requested report needs a model variant that was not supplied."""


class NumericalError(ArdBnnError, ArithmeticError):
    """A factorization or energy evaluation failed numerically."""


class DivergenceError(NumericalError):
    """A leapfrog trajectory produced a non-finite gradient.

    Attributes
    ----------
    step : int
        Zero-based index of the leapfrog step at which the gradient blew up.
    """

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite gradient at leapfrog step {step}")


class ArtifactError(ArdBnnError, ValueError):
    """A persisted model artifact is corrupt or has an unknown version."""
