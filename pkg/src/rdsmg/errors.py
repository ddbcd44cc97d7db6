"""Exception and warning types shared across the package."""


class RdsError(Exception):
    """Base class for every error raised by rdsmg."""


class NetworkError(RdsError, ValueError):
    """Dataset or topology problem."""


class MalformedRecord(NetworkError):
    pass


class NotRadial(NetworkError):
    pass


class Disconnected(NetworkError):
    pass


class DuplicateBusId(NetworkError):
    pass


class NonConvergence(RdsError):
    """The sweep hit ``max_iter`` before the voltage update fell below ``tol``."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class VoltageCollapse(RdsError):
    """A bus voltage fell below the collapse floor during iteration."""


class DegenerateCoefficient(RdsError):
    pass


class AllZeroSizes(RdsError):
    pass


class InfeasiblePenetration(RdsError):
    """The penetration target cannot be met inside the per-unit size bounds."""


class InfeasibleScenario(RdsError):
    pass


class DegenerateLoad(UserWarning):
    pass


class CollinearDegenerate(UserWarning):
    pass


class NegativeSize(UserWarning):
    pass
