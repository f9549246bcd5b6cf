"""
tristeer - Errors

Exception hierarchy shared by every planner stage. Each error carries a
context dict so that retries and the CLI can report where it happened.
"""

from typing import Any, Dict, List, Optional

import numpy as np


def _fmt(value: Any) -> str:
    if isinstance(value, np.ndarray):
        return np.array2string(value, precision=6, separator=",")
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


class PlannerError(Exception):
    """Base class for every planner failure"""

    exit_code = 1

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context: Dict[str, Any] = dict(context)

    def with_context(self, **context: Any) -> "PlannerError":
        """Attach extra context (stage, half, xi) and return self for re-raise"""
        for key, value in context.items():
            self.context.setdefault(key, value)
        return self

    def __str__(self):
        if not self.context:
            return self.message
        details = ", ".join(f"{k}={_fmt(v)}" for k, v in self.context.items())
        return f"{self.message} [{details}]"


class ConfigError(PlannerError):
    """Bad configuration or command-line input"""
    exit_code = 2


class DimensionError(PlannerError):
    """Vector or block length does not match the declared dimensions"""


class ControlDomainError(PlannerError):
    """Control is not defined on the requested interval"""


class BlownUpError(PlannerError):
    """Trajectory left the guard ball"""

    def __init__(self, message: str, blow_up_time: Optional[float] = None, **context: Any):
        super().__init__(message, blow_up_time=blow_up_time, **context)
        self.blow_up_time = blow_up_time


class AnchorNotFound(PlannerError):
    """No regular chain found within the sampling budget"""

    def __init__(self, message: str, best_margin: float, **context: Any):
        super().__init__(message, best_margin=best_margin, **context)
        self.best_margin = best_margin


class RegularityLost(PlannerError):
    """Implicit inverse failed: Newton stagnated or the selected minor collapsed"""

    def __init__(self, message: str, t: float, y: np.ndarray, z: np.ndarray, **context: Any):
        super().__init__(message, t=t, **context)
        self.t = t
        self.y = np.asarray(y, dtype=float)
        self.z = np.asarray(z, dtype=float)


class GramianSingular(PlannerError):
    """Linearized stage is not controllable on the steering window"""

    def __init__(self, message: str, min_eig: float, **context: Any):
        super().__init__(message, min_eig=min_eig, **context)
        self.min_eig = min_eig


class DefectUnsatisfiable(PlannerError):
    """Tracker found no control value meeting the defect bound"""


class SmoothingFailed(PlannerError):
    """L1 budget or pin deviation unreachable"""


class AnchorUnusable(PlannerError):
    """No steering window works around the anchor"""


class ShootingFailed(PlannerError):
    """Lambda correction diverged or left the eps_1 ball"""

    def __init__(self, message: str, trace: Optional[List[float]] = None, **context: Any):
        super().__init__(message, **context)
        self.trace: List[float] = list(trace or [])
