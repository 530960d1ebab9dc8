from enum import IntEnum
from typing import Optional


class ExitCode(IntEnum):
    OK = 0
    CONFIG = 1
    DIVERGENCE = 2
    IO = 3
    CHECK_FAILED = 4


class ChemotaxisError(Exception):
    """Base class for every failure raised by the simulator"""

    exit_code: ExitCode = ExitCode.CONFIG


class ConfigError(ChemotaxisError):
    """Invalid or incomplete configuration"""

    exit_code = ExitCode.CONFIG


class DegenerateParametersError(ChemotaxisError, ValueError):
    """Parameters for which a steady state cannot be bracketed"""

    exit_code = ExitCode.CONFIG


class RegimeError(ChemotaxisError, ValueError):
    """Operation requested in the wrong equilibrium regime"""

    exit_code = ExitCode.CONFIG


class NegativeDensityError(ChemotaxisError, ValueError):
    """A density field with negative cells was passed to an operator"""

    exit_code = ExitCode.CONFIG


class InsufficientDataError(ChemotaxisError, ValueError):
    """Too few usable samples for a fit"""

    exit_code = ExitCode.CONFIG


class SolverError(ChemotaxisError):
    """Linear solve failed to reach its tolerance"""

    exit_code = ExitCode.DIVERGENCE

    def __init__(self, message: str, residual: Optional[float] = None):
        super().__init__(message)
        self.residual = residual


class DivergenceError(SolverError):
    """Growth indicator: the trajectory may be unbounded.

    Raised when max u exceeds the growth limit, a field turns non-finite, or
    the stable step size drops below dt_min. This is never a proof of blow-up.
    """

    def __init__(self, message: str, reason: str, t: float = float("nan")):
        super().__init__(message)
        self.reason = reason
        self.t = t


class OutputError(ChemotaxisError):
    """Output directory missing, unwritable, or a write failed"""

    exit_code = ExitCode.IO
