"""Exception hierarchy shared by the library, the solvers and the CLI."""


class YieldStressError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ConfigError(YieldStressError, ValueError):
    exit_code = 2


class DimensionMismatch(ConfigError):
    pass


class InvalidParameters(ConfigError):
    pass


class PotentialUnavailable(ConfigError):
    """Raised by potential/subgradient operations when nu = 0 and mu2 > 0."""

    def __init__(self, mu2: float):
        super().__init__(
            f"potential operations require nu > 0 or mu2 = 0 (got nu=0, mu2={mu2!r})"
        )
        self.mu2 = mu2


class MissingPlugMatrix(ConfigError):
    pass


class AtPlugPoint(YieldStressError, ValueError):
    """grad_V requested where the flow criterion vanishes."""


class UndefinedAtPlug(YieldStressError, ValueError):
    pass


class NoWitness(YieldStressError, ValueError):
    pass


class CFLViolation(ConfigError):
    pass


class Diverged(YieldStressError, ArithmeticError):
    exit_code = 3

    def __init__(self, message: str, step: int = -1, t: float = float("nan")):
        super().__init__(message)
        self.step = step
        self.t = t
