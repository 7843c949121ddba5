"""Exception types shared across the package."""


class MfsnnError(Exception):
    """Base class for all package errors."""


class ParameterError(MfsnnError, ValueError):
    """A parameter is outside its valid domain."""


class NumericalError(MfsnnError, ArithmeticError):
    """Non-finite state, or an iterative method failed to converge."""


class ConstructionError(MfsnnError, ValueError):
    """A network or vector could not be built from the given inputs."""


class ScheduleError(MfsnnError, ValueError):
    """Stimulus events overlap or are otherwise inconsistent."""


class ProtocolError(MfsnnError, ValueError):
    """A measurement window is inconsistent with the recorded run."""


class ConfigError(MfsnnError, ValueError):
    """An experiment configuration file is invalid.

    ``violations`` holds every problem found, each already formatted
    with its line number where one is known.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("\n".join(self.violations))
