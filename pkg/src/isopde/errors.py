"""Exception hierarchy shared by all isopde modules."""


class IsopdeError(Exception):
    """Base class for every error raised by the library."""


class ConfigError(IsopdeError, ValueError):
    """Invalid sizes, parameters or configuration text.

    ``messages`` carries every violation found, not just the first.
    """

    def __init__(self, messages):
        if isinstance(messages, str):
            messages = [messages]
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


class DomainError(IsopdeError, ValueError):
    pass


class SingularityError(IsopdeError, ArithmeticError):
    pass


class QuadratureError(IsopdeError, ArithmeticError):
    pass


class ShapeError(IsopdeError, ValueError):
    pass


class LinearSolveError(IsopdeError, ArithmeticError):
    pass


class EigenSolveError(IsopdeError, ArithmeticError):
    pass


class PreconditionError(IsopdeError, ValueError):
    pass


class WindowError(IsopdeError, ValueError):
    """No admissible initial slope exists for the barrier construction."""


class NonConvergence(IsopdeError, RuntimeError):
    """Newton (or continuation) did not reach tolerance.

    The last iterate is attached as ``report``; ``theta`` is set when the
    failure happened inside a continuation sweep.
    """

    def __init__(self, message, report=None, theta=None):
        super().__init__(message)
        self.report = report
        self.theta = theta
