"""Exception hierarchy shared across the package."""


class TomographyError(Exception):
    """Base class for every error raised by tomonet."""


class ValidationError(TomographyError, ValueError):
    """Malformed input: wrong shape, out-of-range count, bad config."""


class BadCount(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class EmptyDataset(ValidationError):
    pass


class NumericalFailure(TomographyError, ArithmeticError):
    """An iterative or factorization routine did not converge."""


class SingularState(NumericalFailure):
    """Density matrix is (numerically) rank deficient; regularize first."""


class DegenerateTau(NumericalFailure):
    """A tau matrix with vanishing norm cannot be mapped to a state."""


class FormatError(TomographyError):
    pass


class FormatVersionMismatch(FormatError):
    pass


class ChecksumMismatch(FormatError):
    pass
