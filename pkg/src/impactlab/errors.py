"""Exception hierarchy shared across the package."""


class ImpactLabError(Exception):
    """Base class for all package errors."""


class ConfigError(ImpactLabError):
    """Experiment configuration is missing, malformed, or inconsistent."""


class ModelStrategyMismatchError(ImpactLabError):
    """A strategy constructor was asked to handle a drift model it does not support."""


class NonAbsolutelyContinuousDriftError(ModelStrategyMismatchError):
    """The drift has a genuine jump before the horizon, so expected costs are
    unbounded below and no optimal strategy exists.  Use the exploit tooling in
    ``impactlab.montecarlo`` to extract the unbounded profit instead."""


class NoOptimalStrategyError(ModelStrategyMismatchError):
    """The drift is absolutely continuous but its derivative is not a
    right-continuous semimartingale, so the infimum of the expected costs is
    finite yet not attained."""


class UnsupportedDriftError(ImpactLabError):
    """No closed form is available for the conditional drift processes of this
    model; it cannot feed the strategy constructors (cost evaluation of
    explicit strategies still works)."""


class AdmissibilityError(ImpactLabError):
    """A strategy violates an admissibility requirement (liquidation
    constraint, finiteness, or the position cap)."""


class ConstraintViolationError(ImpactLabError):
    """Trade sizes do not sum to the required liquidation amount."""
