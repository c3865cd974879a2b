"""Exception hierarchy shared by all qndclock modules."""


class QndClockError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgument(QndClockError, ValueError):
    pass


class NumericalDegeneracy(QndClockError, ArithmeticError):
    """A covariance block that must be inverted is singular."""


class ProtocolInfeasible(QndClockError, ValueError):
    """Requested photon numbers imply a scattered fraction >= 1."""


class DerivativeUnstable(QndClockError, ArithmeticError):
    pass


class Unidentifiable(QndClockError, ArithmeticError):
    """The outcome means do not depend on the detuning (zero slope)."""


class WitnessUndefined(QndClockError, ValueError):
    pass


class QuadratureError(QndClockError, ArithmeticError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
