"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`PP04Error`,
so callers (the CLI, the sweep workers) can separate model failures from
programming errors with a single ``except`` clause.
"""


class PP04Error(Exception):
    """Base class for all package errors."""


# linear algebra
class ComplexOrRepeatedEigenvalues(PP04Error):
    """The 3x3 matrix does not have three distinct real eigenvalues."""


class SingularResolvent(PP04Error):
    """``i*omega*I - m`` is singular."""


# flow
class EventStorm(PP04Error):
    """More switching events than ``FlowOptions.max_events``."""


class NonConvergedRoot(PP04Error):
    """An event bracket could not be refined."""


class StepSizeUnderflow(PP04Error):
    """The adaptive integrator step dropped below the minimum step."""


class InvalidInitialState(PP04Error):
    """Initial state lies on the switching surface with zero normal velocity."""


# orbits
class DivergedTrajectory(PP04Error):
    """State norm exceeded the divergence bound."""


class NoConvergence(PP04Error):
    """Periodic-orbit polishing failed to converge."""


class NotAGrazingPoint(PP04Error):
    """Probe point does not separate impacting from non-impacting orbits."""


# grazing
class BracketInvalid(PP04Error):
    """The tracked minimum of F does not change sign over the bracket."""


class LeafLost(PP04Error):
    """The tracked local minimum of F merged with another or disappeared.

    Attributes
    ----------
    location : tuple or None
        Last (V, C) point at which the leaf was still tracked.
    """

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class PushPastGraze(PP04Error):
    """Push-forward would move the section past the grazing time."""


class BackwardEventAmbiguity(PP04Error):
    """Backward flow met a tangency with the switching surface."""


# scan
class OrbitLostBeforeGraze(PP04Error):
    """The followed (1, n) orbit was lost before it reached grazing."""


# configuration
class ConfigError(PP04Error):
    """Bad configuration input (unknown key or out-of-range value)."""

    def __init__(self, message, key=None, line=None):
        super().__init__(message)
        self.key = key
        self.line = line


class UnknownKey(ConfigError):
    pass


class OutOfRange(ConfigError):
    pass
