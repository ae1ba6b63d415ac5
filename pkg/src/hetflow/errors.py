"""Exception hierarchy shared by the solvers and the command-line front end."""


class HetflowError(Exception):
    """Base class for all errors raised by hetflow."""


class ConfigError(HetflowError):
    """Invalid or unreadable run configuration.

    ``field`` names the offending key when one can be identified.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class SolverError(HetflowError):
    """A numerical solve could not be completed."""


class DegenerateSegment(SolverError):
    pass


class BlowupDetected(SolverError):
    def __init__(self, message, t=None, kappa_max=None):
        super().__init__(message)
        self.t = t
        self.kappa_max = kappa_max


class GradientBlowup(SolverError):
    pass


class QuadratureError(HetflowError):
    pass


class AmbiguousPinning(QuadratureError):
    """|G| comes close to zero without changing sign."""


class InsufficientData(HetflowError):
    pass


class NotCauchy(SolverError):
    pass


class FitDegenerate(HetflowError):
    pass
