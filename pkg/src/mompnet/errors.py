"""Exception and warning types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class ShapeError(ValueError):
    """Array dimensions are inconsistent."""


class RankDeficiencyError(ValueError):
    """A matrix that must be invertible is (numerically) singular."""


class ConfigError(ValueError):
    """A scenario or CLI configuration is invalid."""


class RankDeficientWarning(RuntimeWarning):
    """Least squares fell back to the minimum-norm solution."""
