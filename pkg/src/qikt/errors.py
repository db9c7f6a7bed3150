"""Exception and warning types raised across the package."""


class QiktError(Exception):
    """Base class for all package errors."""


class GridError(QiktError, ValueError):
    pass


class GridMismatch(GridError):
    pass


class NormalizationError(QiktError, ValueError):
    pass


class PhaseUnwrapFailure(QiktError):
    pass


class DensityFloorViolation(QiktError):
    pass


class QuadratureUnderflow(QiktError):
    pass


class NonPositiveTemperature(QiktError, ValueError):
    pass


class DegenerateDensity(QiktError):
    pass


class EmptyDensity(QiktError):
    pass


class OutOfDomain(QiktError):
    pass


class NonSeparableDensity(QiktError):
    pass


class ParticleEscapedDomain(QiktError):
    pass


class DegenerateCloud(QiktError):
    pass


class TemperatureCollapse(QiktError):
    pass


class MissingArtifact(QiktError, FileNotFoundError):
    pass


class ConfigError(QiktError):
    """Base for configuration problems (CLI exit code 2)."""


class ParseError(ConfigError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + where)


class ValidationError(ConfigError, ValueError):
    def __init__(self, message, key=None):
        self.key = key
        super().__init__(message)


class CFLWarning(UserWarning):
    pass


class SparseBins(UserWarning):
    pass


class StiffnessWarning(UserWarning):
    pass
