class ThreeSpheresError(Exception):
    """Root of every error raised on purpose by this package."""


class InvalidInputError(ThreeSpheresError, ValueError):
    """An operation was called outside its precondition."""


class RegimeMismatchError(InvalidInputError):
    """A bound mode or formula does not apply to the exponent regime of the parameters."""


class ConfigError(InvalidInputError):
    """An experiment configuration failed validation."""


class MonotonicityError(ThreeSpheresError):
    """M(r) decreased (or m(r) increased) with r; the source breaks the maximum principle."""


class RadialBlowUpError(ThreeSpheresError, RuntimeError):
    def __init__(self, radius: float, value: float, derivative: float):
        self.radius = radius
        self.value = value
        self.derivative = derivative
        super().__init__(f"Radial solution blew up at r={radius:.6g} (u={value:.3e}, u'={derivative:.3e})")


class FluxInversionError(ThreeSpheresError, RuntimeError):
    """The radial flux could not be inverted for u'."""


class ShootingBracketError(ThreeSpheresError, RuntimeError):
    """The shooting map could not bracket the target boundary value."""


class NonConvergenceError(ThreeSpheresError, RuntimeError):
    def __init__(self, message: str, residual_history: list[float]):
        self.residual_history = residual_history
        super().__init__(message)


class VerificationGateError(ThreeSpheresError):
    def __init__(self, message: str, failures: int):
        self.failures = failures
        super().__init__(message)
