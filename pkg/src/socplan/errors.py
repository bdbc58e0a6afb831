"""Exception types raised across the package."""


class SocplanError(Exception):
    """Base class for all package errors."""


class ConfigError(SocplanError, ValueError):
    """A document or value failed validation.

    ``field`` names the offending key when one can be identified.
    """

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class SocRangeError(SocplanError, ValueError):
    """A state of charge fell outside the domain where it can be evaluated."""


class InfeasibleLoadError(SocplanError, ValueError):
    """The requested power cannot be delivered (complex or non-positive voltage)."""


class FitDomainError(SocplanError, ValueError):
    """A linear model was evaluated outside the box it was fitted on."""


class FitError(SocplanError, ValueError):
    """The least-squares fit could not be computed."""


class TrajectoryError(SocplanError, RuntimeError):
    """Simulation stopped early; ``trajectory`` holds the samples produced so far."""

    def __init__(self, message: str, trajectory=None, state=None):
        self.trajectory = trajectory
        self.state = state
        super().__init__(message)


class NoPulsesFound(SocplanError, ValueError):
    """Pulse segmentation found no interval above the power threshold."""


class ComparisonError(SocplanError, ValueError):
    """Trajectories could not be compared (no overlapping time range)."""


class DominanceSafetyError(SocplanError, ValueError):
    """The resource extension is not monotone in SOC, so label dominance is unsound."""


class InstanceTooLargeError(SocplanError, ValueError):
    """Brute-force enumeration refused an instance above its node guard."""


class SolveTimeout(SocplanError, TimeoutError):
    """A solver exceeded its deadline."""
