"""Exception hierarchy shared by all modules."""


class NVEncodeError(Exception):
    """Base class for errors raised by nvencode."""

    exit_code = 5


class GeometryError(NVEncodeError, ValueError):
    """Invalid coil geometry (e.g. a zero-length segment)."""


class SingularityError(NVEncodeError, ValueError):
    """Field evaluated on (or within 1 nm of) a current filament."""


class ConfigError(NVEncodeError, ValueError):
    """Experiment configuration inconsistent with the requested run."""


class ProtocolError(NVEncodeError):
    """Pulse protocol cannot be executed as requested."""


class InitializationError(NVEncodeError):
    """A fitter could not find enough starting features in the data."""


class DetectionError(NVEncodeError):
    """Fewer image peaks than requested rise above the noise floor."""

    def __init__(self, message, found=()):
        super().__init__(message)
        self.found = list(found)


class RankError(NVEncodeError, ValueError):
    """Regression design matrix is rank deficient."""


class BudgetError(NVEncodeError, ValueError):
    """Error budget undefined for the supplied drive parameters."""


class ConfigParseError(NVEncodeError):
    exit_code = 2


class ConfigRangeError(NVEncodeError):
    exit_code = 3

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class MissingInputError(NVEncodeError):
    exit_code = 4
