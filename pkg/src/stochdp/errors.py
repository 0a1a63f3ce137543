"""Exception hierarchy shared across the solver."""


class StochDPError(Exception):
    """Base class for all library errors."""


class ConfigError(StochDPError):
    """Malformed or inconsistent run configuration."""


class GridError(StochDPError):
    """Evaluation outside the grid hull, missing shock node, or grid mismatch."""


class FeasibilityError(StochDPError):
    """Empty feasible action set at a state node."""


class NumericError(StochDPError):
    """Non-finite value produced where a finite one is required."""


class DivergenceError(StochDPError):
    """A series or iteration whose terms stopped decreasing."""


class ConditionError(StochDPError):
    """A model admissibility condition or certified bound failed."""
