"""Exception types.  The CLI maps the three families onto exit codes 2, 3 and 4."""


class SemcomError(Exception):
    pass


# --- bad or missing artifacts (exit code 2)
class ArtifactError(SemcomError):
    pass


class FormatError(ArtifactError):
    pass


class LengthError(ArtifactError):
    pass


class PairingError(ArtifactError):
    pass


class VersionError(ArtifactError):
    pass


class CorruptionError(ArtifactError):
    pass


# --- invalid configuration or arguments (exit code 3)
class ConfigError(SemcomError, ValueError):
    pass


class ParameterError(ConfigError):
    pass


class ShapeError(ConfigError):
    pass


class LabelError(ConfigError):
    pass


class DomainError(ConfigError):
    pass


class DataError(ConfigError):
    pass


class CapacityError(ConfigError):
    pass


class AllocationError(ConfigError):
    pass


class SizeError(ConfigError):
    pass


class CacheError(SemcomError):
    pass


class FrozenModelError(SemcomError):
    """Mutation of a frozen model, or use of an unfrozen one where frozen is required."""


# --- numerical failure (exit code 4)
class DivergenceError(SemcomError, ArithmeticError):
    pass
