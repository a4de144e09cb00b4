"""Exception types raised by the solvers and certificate machinery."""


class QuasiCtrlError(Exception):
    """Base class for all package errors."""


class PositivityLoss(QuasiCtrlError):
    """A depth value became nonpositive."""

    def __init__(self, message, time_index=None):
        super().__init__(message)
        self.time_index = time_index


class CFLViolation(QuasiCtrlError):
    """Time step exceeds the advective CFL bound."""

    def __init__(self, message, time_index=None):
        super().__init__(message)
        self.time_index = time_index


class IncompatibleData(QuasiCtrlError, ValueError):
    """Boundary controls disagree with the initial traces."""


class PotentialOverflow(QuasiCtrlError, ValueError):
    """|w| exceeds the exponentiation guard."""


class DivergedChain(QuasiCtrlError):
    """Reconstructed heat state drifted away from the direct heat solve."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class TooCloseToSingularTime(QuasiCtrlError, ValueError):
    """Dual solution requested too close to its Dirac datum."""


class SearchExhausted(QuasiCtrlError):
    """A certificate search ran out of halvings."""


class NoPositiveDelta(QuasiCtrlError):
    """No dyadic delta satisfies the linear lower bound near the boundary."""


class BadDelta(QuasiCtrlError, ValueError):
    """Plateau transitions of the adversarial datum would overlap."""


class CertificateInvalid(QuasiCtrlError):
    """The boundary-flux sign certificate does not hold."""


class HorizonMismatch(QuasiCtrlError, ValueError):
    """Heat horizon differs from the dual horizon."""


class InconsistentSetup(QuasiCtrlError, ValueError):
    """Optimizer and obstruction report were computed on different setups."""


class ConfigError(QuasiCtrlError, ValueError):
    """Malformed or inconsistent run configuration."""
