"""Exception hierarchy shared by every module of the package."""


class ZslError(Exception):
    """Base class for all package errors."""


class ContractError(ZslError, ValueError):
    """An operation was called with inputs that violate its preconditions."""


class GradCheckError(ZslError):
    """A function evaluated during a finite-difference check was not finite."""

    def __init__(self, message, coordinate=None):
        super().__init__(message)
        self.coordinate = coordinate


class FormatError(ZslError):
    """A serialized file is malformed; ``offset`` is the failing byte position."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class TrainingError(ZslError):
    """Training hit a non-finite value."""

    def __init__(self, message, epoch=None, batch=None, term=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.term = term


class MiningError(ContractError):
    """A batch cannot support batch-hard triplet mining."""


class DatasetError(ZslError, ValueError):
    """Dataset ingestion or validation failed."""

    def __init__(self, message, file=None, row=None):
        where = []
        if file is not None:
            where.append(f"file {file}")
        if row is not None:
            where.append(f"row {row}")
        if where:
            message = f"{message} [{', '.join(where)}]"
        super().__init__(message)
        self.file = file
        self.row = row


class ConfigError(ZslError, ValueError):
    """An invalid or infeasible configuration value."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class EvaluationError(ZslError, ValueError):
    """Metric inputs are inconsistent (e.g. a class has no test samples)."""
