"""Exception types shared across the package."""


class VesselTrackError(Exception):
    """Base class for all package-specific errors."""


class BadConfig(VesselTrackError):
    """A parameter combination violates a documented precondition."""


class DegenerateChart(VesselTrackError):
    """A spherical chart operation was requested at or too close to alpha = +-pi/2."""


class OutOfChart(VesselTrackError):
    """A point left the valid coordinate chart during a mapping."""


class OutOfRange(VesselTrackError):
    """A requested target lies outside the image of the projection."""


class NoConvergence(VesselTrackError):
    """An iterative routine failed to reach its tolerance within its budget."""


class SeedOutsideGrid(VesselTrackError):
    """A seed or tip point lies outside the grid it must be snapped to."""


class ZeroCovector(VesselTrackError):
    """A gradient of the dual metric was requested for a (numerically) zero covector."""
