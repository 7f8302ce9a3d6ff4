"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid architecture, quadrature, budget, or problem configuration."""


class ShapeMismatchError(ValueError):
    """Tensor shape or parameter-vector length does not match the architecture."""


class DomainError(ValueError):
    """Argument outside its mathematical domain (time outside [0,1], non-SPD covariance, ...)."""


class MissingChannelError(RuntimeError):
    """An action term demanded a log-density or score channel that was not transported."""


class UnsupportedModeError(RuntimeError):
    """Requested channel/estimator combination has no sound estimator."""


class NumericalBlowupError(RuntimeError):
    """Integration produced non-finite state."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite state at integration step {step}")


class TrainingDivergedError(RuntimeError):
    """Optimization loss became non-finite."""

    def __init__(self, step: int, seed=None, message: str = ""):
        self.step = step
        self.seed = seed
        detail = f"loss became non-finite at step {step}"
        if seed is not None:
            detail += f" (seed {seed})"
        super().__init__(message or detail)


class UnknownProblemError(KeyError):
    """Problem name not present in the registry."""
