"""Exception hierarchy shared by all gridreduce modules."""


class GridReduceError(Exception):
    """Base class for all errors raised by gridreduce."""


class InputError(GridReduceError):
    """Bad user input (case file, zone file, artifact)."""


class NumericalError(GridReduceError):
    """A numerical routine failed."""


class MalformedCase(InputError):
    pass


class NoSlack(InputError):
    pass


class Disconnected(InputError):
    pass


class DimensionMismatch(GridReduceError, ValueError):
    pass


class OverlappingZones(InputError):
    pass


class UnknownBus(InputError):
    pass


class DisconnectedReduction(InputError):
    pass


class ZeroReactanceBranch(InputError):
    pass


class HashMismatch(InputError):
    """Artifacts built from different networks or zone maps were combined."""


class NonConvergence(NumericalError):
    def __init__(self, msg, iterations=None, max_mismatch=None):
        super().__init__(msg)
        self.iterations = iterations
        self.max_mismatch = max_mismatch


class SingularJacobian(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class TooManyFailures(NumericalError):
    pass


class TrainingAborted(NumericalError):
    """Raised when the optimizer cannot recover from repeated singular steps."""

    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}
