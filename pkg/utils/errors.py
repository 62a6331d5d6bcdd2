"""
Exception hierarchy for the isotropic Landau lab.

Every error carries the process exit code the command line maps it to, so the
CLI and the Streamlit pages can report failures without inspecting messages:

  configuration / usage  → 2
  numerical              → 3
  resource               → 4
"""


class LabError(Exception):
    """Base class for all lab errors."""

    exit_code = 1


class ConfigurationError(LabError):
    """Invalid or unknown configuration value."""

    exit_code = 2

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class UsageError(LabError):
    """An operation was called with inputs that violate its contract."""

    exit_code = 2


class NumericalError(LabError):
    """A computation produced unusable numbers or failed to converge."""

    exit_code = 3

    def __init__(self, message: str):
        super().__init__(message)
        # simulate() attaches the partial FlowTrace here before re-raising
        self.trace = None


class NumericalBlowupError(NumericalError):
    def __init__(self, message: str, step: int, t: float):
        super().__init__(f"{message} (step {step}, t={t:.6g})")
        self.step = step
        self.t = t


class MassDriftError(NumericalError):
    def __init__(self, drift: float, budget: float, step: int, t: float):
        super().__init__(
            f"mass drift {drift:.3e} exceeds budget {budget:.3e} (step {step}, t={t:.6g})"
        )
        self.drift = drift
        self.budget = budget
        self.step = step
        self.t = t


class NonConvergenceError(NumericalError):
    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class InsufficientDataError(NumericalError):
    pass


class ResourceError(LabError):
    """Input too large for a test-scale oracle."""

    exit_code = 4
