"""Exception hierarchy shared across the package."""


class AmpmError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(AmpmError, ValueError):
    pass


class ClockUnderflowError(AmpmError, ValueError):
    """A clock offset moved a reading below the epoch."""


class InvalidConfigurationError(AmpmError, ValueError):
    pass


class NoMatchError(AmpmError, LookupError):
    """No rule matched and the table has no default action.

    Tables built by this package are total, so this indicates a construction bug.
    """


class NotReadyError(AmpmError):
    """The requested interval (or its counterpart record) is not available yet."""


class NotFoundError(AmpmError, LookupError):
    pass


class DataIntegrityError(AmpmError):
    """Conflicting duplicate export records."""


class ScenarioError(AmpmError):
    """Base class for scenario file problems."""


class ScenarioFileError(ScenarioError):
    pass


class ScenarioSyntaxError(ScenarioError):
    pass


class ScenarioSchemaError(ScenarioError):
    """Unknown key, missing key or wrong value type."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class ScenarioRangeError(ScenarioError, ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
