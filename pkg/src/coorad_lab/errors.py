"""Exception hierarchy shared across the package.

Validation problems (bad arguments, malformed configs) raise ParameterError;
failures that occur while computing on valid inputs raise ComputationError.
The CLI maps the two families to exit codes 2 and 3 respectively.
"""


class CooradError(Exception):
    """Base class for all package errors."""


class ParameterError(CooradError, ValueError):
    """Invalid argument or configuration value."""


class ComputationError(CooradError, RuntimeError):
    """A computation failed on otherwise valid inputs."""


class ConvergenceError(ComputationError):
    """An iterative solver ran out of iterations.

    Carries the last iterate so callers can inspect how close it got.
    """

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate
