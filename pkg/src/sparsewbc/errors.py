"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`SparseWBCError`, so callers can catch one type at the boundary
(the CLI maps it to exit code 1 or 2).
"""


class SparseWBCError(Exception):
    """Base class for all package errors."""


class InvalidMatrix(SparseWBCError, ValueError):
    """Matrix with non-finite entries or an unusable shape."""


class NotPositiveDefinite(SparseWBCError, ValueError):
    """A weight matrix failed its Cholesky factorization."""


class DimensionError(SparseWBCError, ValueError):
    """Inconsistent matrix/vector sizes."""


class UnknownFrame(SparseWBCError, KeyError):
    """Frame or link name not present in the model."""


class NotSufficientlyConstrained(SparseWBCError):
    """Supporting constraints cannot accelerate the base in every direction."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DependentConstraints(SparseWBCError):
    """Controlled and supporting constraint rows are not linearly independent."""


class MissingForceMeasurement(SparseWBCError, ValueError):
    """Rank-deficient controlled constraints need a force measurement."""


class StaleDecomposition(SparseWBCError):
    """Decomposition does not match the constraint set or model it is used with."""


class TrivialNullspace(SparseWBCError):
    """No torque redundancy left to optimize supporting forces."""


class InconsistentDynamics(SparseWBCError):
    """Dynamics residual is not in the range of the supporting Jacobian."""


class InfeasibleConstraints(SparseWBCError):
    """The stacked dynamics/constraint system has no exact solution."""


class InvalidDuration(SparseWBCError, ValueError):
    """Trajectory duration must be positive."""


class IndexOutOfRange(SparseWBCError, IndexError):
    """Selected force component does not exist."""


class SimulationDiverged(SparseWBCError):
    """Simulator state became non-finite."""


class ModelFormatError(SparseWBCError, ValueError):
    """Model file could not be parsed or failed validation."""


class ScenarioError(SparseWBCError, ValueError):
    """Scenario file could not be parsed or failed validation."""
