"""Exception taxonomy shared by all zerosmooth modules.

The CLI maps these onto single-line, machine-parsable error reports, so
every failure mode raised by library code should use one of the classes
below (or a subclass).
"""


class ZeroSmoothError(Exception):
    """Base class for all library errors."""


class DimensionError(ZeroSmoothError):
    """Operand shapes are inconsistent."""


class ConfigError(ZeroSmoothError):
    """Invalid configuration value or combination."""


class UnsupportedVariantError(ConfigError):
    """Requested an operator variant outside its defined regime."""


class RangeError(ZeroSmoothError, IndexError):
    """Index or step outside its valid range."""


class OrderingError(ZeroSmoothError):
    """Step ordering constraint violated (expects s < t)."""


class RankError(ZeroSmoothError):
    """Matrix does not have the rank an operation requires."""


class ScheduleError(ZeroSmoothError):
    """Noise-schedule table is malformed or used outside its domain."""


class PlanError(ZeroSmoothError):
    """Window plan does not cover the frames it is applied to."""


class CacheMissError(ZeroSmoothError, KeyError):
    """Hidden-state cache has no entry for the requested key."""

    def __init__(self, step, module_id, role):
        self.key = (step, module_id, role)
        super().__init__(
            f"no cached hidden state for step={step} module={module_id!r} role={role!r}"
        )

    def __str__(self):  # KeyError quotes its arg; keep the plain message
        return self.args[0]


class TrainingError(ZeroSmoothError):
    """Training diverged or could not proceed."""


class ContainerError(ZeroSmoothError):
    """Malformed video or weight container file."""
