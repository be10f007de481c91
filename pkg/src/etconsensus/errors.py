"""Exception types shared across the package."""


class EtConsensusError(Exception):
    """Base class for all package errors."""


class GraphError(EtConsensusError):
    """Invalid topology, weights, or spanning-tree request."""


class SignalError(EtConsensusError):
    """Invalid weight-signal definition or a bound violation."""


class NotPersistentlyExciting(EtConsensusError):
    """Excitation check failed on the tested horizon.

    Carries the offending window and edge so callers can report them.
    """

    def __init__(self, message, window=None, edge=None):
        super().__init__(message)
        self.window = window
        self.edge = edge


class ParameterError(EtConsensusError):
    """Bound computation requested outside its hypotheses."""


class ScheduleError(EtConsensusError):
    """Switching schedule violates dwell or union-connectivity hypotheses."""


class SimulationError(EtConsensusError):
    """Numerical failure (non-finite state, event overflow) during a run."""


class ConfigError(EtConsensusError):
    """Malformed or semantically invalid scenario configuration."""
