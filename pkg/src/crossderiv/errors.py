"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class CrossDerivError(Exception):
    exit_code = 1


class ParameterError(CrossDerivError, ValueError):
    """Inconsistent or out-of-range parameters."""

    exit_code = 2


class AlignmentError(ParameterError):
    """Model outputs do not line up with an evaluation design."""


class DomainError(CrossDerivError, ValueError):
    """A point (or probability) falls outside the admissible domain."""

    exit_code = 3


class A2Error(DomainError):
    """Perturbation scales violate beta_max * h_j * sigma <= 1/2."""


class SingularityError(CrossDerivError, ArithmeticError):
    """The constraint system has no unique solution."""

    exit_code = 4
