"""Exception hierarchy.

Validation problems subclass ``ValueError`` so plain numpy-style callers can
catch them generically; numerical failures subclass ``NumericalError``. The
CLI maps the first family (and output failures) to exit code 2 and the
second to exit code 3.
"""


class QBirthmarkError(Exception):
    """Base class for all package errors."""


class ValidationError(QBirthmarkError, ValueError):
    """Bad input detected before any computation."""


class InvalidDimensionError(ValidationError):
    pass


class InvalidCouplingError(ValidationError):
    pass


class ConfigError(ValidationError):
    """Experiment configuration is malformed; ``key`` names the culprit."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class NumericalError(QBirthmarkError, ArithmeticError):
    pass


class SolverError(NumericalError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class InsufficientDataError(NumericalError):
    pass


class CutoffError(NumericalError):
    """The cutoff time lies outside the admissible window."""


class PropagationError(NumericalError):
    """Wavefunction became non-finite during propagation."""


class OutputError(QBirthmarkError, OSError):
    """Writing an artifact failed; ``path`` says where."""

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path
