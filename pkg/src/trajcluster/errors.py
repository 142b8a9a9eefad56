"""Exception hierarchy.

Errors fall in three families so callers (and the command line) can tell a
bad request from bad data from a bug: :class:`ConfigError`,
:class:`DataError` and everything else deriving from :class:`TrajclusterError`.
"""


class TrajclusterError(Exception):
    """Base class for all package errors."""


class ConfigError(TrajclusterError):
    """The request itself is invalid (unknown names, bad arguments)."""


class DataError(TrajclusterError):
    """The input data violates a precondition."""


class SchemaError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class DuplicateObservationError(DataError):
    pass


class ShapeError(DataError):
    pass


class AlignmentError(DataError):
    pass


class MissingDataError(DataError):
    pass


class ImputationError(DataError):
    pass


class EmptyDatasetError(DataError):
    pass


class DegenerateTrajectoryError(DataError):
    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class PartialAssignmentError(DataError):
    pass


class IncompatiblePartitionError(DataError):
    pass


class UnknownMethodError(ConfigError):
    pass


class SpecValidationError(ConfigError):
    pass


class UnknownMetricError(ConfigError):
    pass


class RuleError(ConfigError):
    pass


class InfeasibleError(ConfigError):
    """Requested more clusters than there are trajectories."""


class CapacityError(ConfigError):
    pass


class ContractError(TrajclusterError):
    """A user-supplied callable broke its contract."""


class NotFoundError(TrajclusterError):
    pass
