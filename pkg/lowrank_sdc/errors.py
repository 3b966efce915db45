"""Exception hierarchy for the low-rank SDC library"""

from typing import Optional, Tuple


class LowRankSDCError(Exception):
    """Base class for every error raised by lowrank_sdc and the harness"""


class InvalidInputError(LowRankSDCError, ValueError):
    """Non-finite entries, mismatched shapes or empty inputs"""


class InvalidParameterError(LowRankSDCError, ValueError):
    """A scalar or structural parameter is out of its admissible range"""


class CapacityError(LowRankSDCError, ValueError):
    """A small dense system grew beyond the configured size cap"""


class ConfigError(LowRankSDCError, ValueError):
    """An experiment configuration could not be loaded or validated"""


class SingularSystemError(LowRankSDCError, ArithmeticError):
    """A dense linear system is singular to working precision"""

    def __init__(self, message: str, condition_estimate: float = float("inf")):
        super().__init__(f"{message} (condition estimate {condition_estimate:.3e})")
        self.condition_estimate = condition_estimate


class SolverFailureError(LowRankSDCError, RuntimeError):
    """An iterative or implicit solve did not reach its residual contract"""

    def __init__(
        self,
        message: str,
        residual: float = float("nan"),
        location: Optional[Tuple[int, int]] = None,
    ):
        self.residual = residual
        self.location = location
        where = f" at (k={location[0]}, m={location[1]})" if location is not None else ""
        super().__init__(f"{message}{where}; final residual {residual:.3e}")

    def at(self, k: int, m: int) -> "SolverFailureError":
        """Return a copy of this error tagged with an SDC (level, subnode) location."""
        base = str(self).split(";")[0]
        return SolverFailureError(base, residual=self.residual, location=(k, m))
