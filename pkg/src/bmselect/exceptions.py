"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: validation errors exit with 2,
numerical failures with 3, and resource/limit errors with 4.
"""


class DataValidationError(ValueError):
    """Raised when input data, configuration, or file contents are invalid."""


class DegenerateFitError(DataValidationError):
    """Raised when a subgroup has too few observations to fit the null model."""


class NumericalError(ArithmeticError):
    """Raised when a numerical computation cannot be completed reliably."""


class ResourceLimitError(RuntimeError):
    """Raised when a requested computation exceeds a configured size limit."""
