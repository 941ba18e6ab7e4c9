class ConvergenceError(RuntimeError):
    """A quadrature or refinement loop failed to reach its tolerance.

    Carries the best value and the achieved error estimate so callers can
    report diagnostics.
    """

    def __init__(self, message, value=None, error_estimate=None):
        super().__init__(message)
        self.value = value
        self.error_estimate = error_estimate
