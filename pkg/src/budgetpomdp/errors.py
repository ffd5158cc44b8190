"""Exception types raised across the package."""


class ParameterError(ValueError):
    """Invalid argument or configuration value."""


class DataError(ValueError):
    """Input data inconsistent with the model it is fed to."""


class ContractViolation(RuntimeError):
    """A caller broke an operation's precondition (index out of range, stepping past horizon...)."""


class ResourceError(RuntimeError):
    """A table or grid would exceed its configured size cap."""


class ModelCorruptionError(RuntimeError):
    """Network weights or losses became non-finite."""


class SchemaError(ValueError):
    """A serialized artifact has an unknown or mismatched schema version."""


class BuildOrderError(RuntimeError):
    """A stage ran before an artifact it depends on was built."""
