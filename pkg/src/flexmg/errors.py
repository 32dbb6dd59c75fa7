"""Exception types raised by flexmg."""


class FlexMGError(Exception):
    """Base class for package errors."""


class DiagnosticError(FlexMGError):
    """An inner diagnostic computation (e.g. the A^-1 norm solve) failed."""


class SmootherError(FlexMGError):
    """A plane factorization or plane solve broke down."""


class HierarchyError(FlexMGError):
    """The multigrid hierarchy cannot be built for the requested grid."""


class DenseCapError(ValueError):
    """A dense analysis routine was asked to materialize too large a matrix."""


class NotPrescalableError(FlexMGError):
    """The spectrum of TA is complex or not strictly positive."""


class PreconditionViolation(FlexMGError):
    """An analysis routine's mathematical precondition does not hold."""
