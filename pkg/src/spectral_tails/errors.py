class ConvergenceError(RuntimeError):
    """Iterative eigensolver stopped before reaching the requested residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class InvariantError(AssertionError):
    """A checked mathematical invariant failed on concrete inputs."""


class BudgetExceededError(RuntimeError):
    """Rejection sampling hit its trial cap before collecting enough samples."""
