from typing import Optional


class SamplerError(Exception):
    """Base class for every error raised by the sampler package."""


class InvalidArgumentError(SamplerError, ValueError):
    pass


class DetailedBalanceError(InvalidArgumentError):
    pass


class DomainError(SamplerError, ValueError):
    pass


class PositivityError(DomainError):
    pass


class StepTooLargeError(SamplerError, ValueError):
    pass


class StepSizeUnderflowError(SamplerError, RuntimeError):
    pass


class UnsupportedMethodError(SamplerError, ValueError):
    pass


class NumericalRankError(SamplerError, ArithmeticError):
    pass


class ConfigError(SamplerError, ValueError):
    def __init__(self, message: str, line: Optional[int] = None) -> None:
        self.line = line
        if line is not None:
            message = f'line {line}: {message}'
        super().__init__(message)
