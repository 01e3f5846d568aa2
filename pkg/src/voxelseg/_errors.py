"""Exception hierarchy.

Every domain failure raises a subclass of :class:`DomainError`.  The class
name doubles as the machine-readable error category printed by the CLI.
"""


class DomainError(ValueError):
    """Base class for all domain errors raised by voxelseg."""

    @property
    def category(self) -> str:
        return type(self).__name__


# volume
class EmptyVolume(DomainError):
    pass


class InterpMismatch(DomainError):
    pass


class BadPercentiles(DomainError):
    pass


class ShapeMismatch(DomainError):
    pass


# sdt
class NotBinary(DomainError):
    pass


class EmptyPointSet(DomainError):
    pass


class EmptyMask(DomainError):
    pass


# clustering
class AllZeroDensity(DomainError):
    pass


class EmptyCentroids(DomainError):
    pass


# losses
class NoClasses(DomainError):
    pass


class LengthMismatch(DomainError):
    pass


class GradShapeMismatch(DomainError):
    pass


# metrics
class EmptyGroundTruth(DomainError):
    pass


# phantom
class ConfigOverlap(DomainError):
    pass


class InvalidConfig(DomainError):
    pass


# pipeline
class CentroidOutOfBounds(DomainError):
    pass


class TargetMissing(DomainError):
    pass


class MissingSDM(DomainError):
    pass


class NoCentroidsFound(DomainError):
    pass
