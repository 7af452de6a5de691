"""Exception hierarchy.

``ValidationError`` covers bad inputs (CLI exit code 1); ``NumericalError``
covers algorithmic failures (CLI exit code 2).
"""


class DevrateError(Exception):
    pass


class ValidationError(DevrateError, ValueError):
    pass


class NumericalError(DevrateError, ArithmeticError):
    pass


class DomainError(ValidationError):
    """Non-finite temperature or parameter value."""


class InvalidScale(ValidationError):
    def __init__(self, temperature: float, scale: float):
        self.temperature = temperature
        self.scale = scale
        super().__init__(
            f"inverse-gamma scale {scale:.6g} is not positive at T = {temperature:g} C"
        )


class UnsupportedZero(ValidationError):
    def __init__(self, temperatures):
        self.temperatures = list(temperatures)
        super().__init__(
            "zero rates are not supported by the plain inverse-gamma model "
            f"(observed at T = {self.temperatures}); use the zero-inflated model"
        )


class DegenerateDataset(ValidationError):
    pass


class NoRoot(NumericalError):
    def __init__(self, bracket, message: str = "no sign change of the rate inside bracket"):
        self.bracket = tuple(float(b) for b in bracket)
        super().__init__(f"{message} {self.bracket}")


class NoGradient(NumericalError):
    pass


class InitializationError(NumericalError):
    pass


class SamplingError(NumericalError):
    pass


class DegenerateElbo(NumericalError):
    pass


class BridgeDiverged(NumericalError):
    def __init__(self, message: str, trace):
        self.trace = list(trace)
        super().__init__(message)


class MissingQuantity(ValidationError):
    def __init__(self, model: str, quantity: str):
        self.model = model
        self.quantity = quantity
        super().__init__(f"model {model!r} has positive weight but no draws of {quantity!r}")
