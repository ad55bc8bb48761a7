"""Exception types raised across the package."""


class DwpkitError(Exception):
    """Base class for every error this package raises deliberately."""


class FactorizationFailure(DwpkitError):
    """A matrix could not be factorised even after jitter escalation."""


class RankDeficiency(DwpkitError):
    """A pivot collapsed while factorising a low-rank matrix."""


class Singular(DwpkitError):
    """A matrix that must be invertible is numerically singular."""


class NonPositiveDiagonal(DwpkitError):
    """A triangular factor has a zero or negative diagonal entry."""


class DomainError(DwpkitError):
    """An argument lies outside the mathematical domain of a function."""


class ShapeMismatch(DwpkitError):
    """Operand shapes are incompatible."""


class SupportError(DwpkitError):
    """A point lies outside the support of a distribution."""


class SingularJacobian(DwpkitError):
    """A numerically estimated Jacobian is singular to working precision."""


class NonFiniteGradient(DwpkitError):
    """A gradient evaluation produced NaN or infinity."""


class TrainingFailure(DwpkitError):
    """Optimisation aborted; the message carries step-level diagnostics."""


class NonConvergence(DwpkitError):
    """An iterative routine exhausted its iteration budget."""


class ParseError(DwpkitError):
    """A data file could not be parsed; the message names row and column."""


class ConstantColumn(DwpkitError):
    """A data column has zero variance on the training split."""


class ConfigError(DwpkitError):
    """A configuration document is missing or mistypes a field."""
