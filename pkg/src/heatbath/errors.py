"""Exception hierarchy for heatbath."""


class HeatBathError(Exception):
    """Base class for all library errors."""


class ConfigError(HeatBathError):
    """Malformed configuration file or inconsistent system definition."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + where)


class SpectralGapError(HeatBathError):
    """The symmetric part of the compression generator is not positive definite."""


class QuadratureError(HeatBathError):
    pass


class GridCoverageError(HeatBathError):
    """A grid does not cover the interval an operation needs to read."""


class FactorizationError(HeatBathError):
    pass


class ShapeError(HeatBathError, ValueError):
    pass


class DivergenceError(HeatBathError):
    """An MCMC chain escaped to -inf energy (non-integrable target)."""


class ConvergenceError(HeatBathError):
    """MCMC chains failed the split-Rhat diagnostic."""


class DomainError(HeatBathError, ValueError):
    pass


class JacobianSingularError(HeatBathError):
    pass
