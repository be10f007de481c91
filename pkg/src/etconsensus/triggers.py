"""Event-triggered broadcast machinery.

Each agent broadcasts a piecewise-constant value and refreshes it whenever
its trigger function crosses zero from below. The static trigger compares
the broadcast error against a fixed threshold; the dynamic trigger lets the
threshold decay exponentially, which is what forces exact consensus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import GraphError, ParameterError

EVENT_TOL = 1e-9  # event-localization tolerance (time units)

STATIC = "static"
DYNAMIC = "dynamic"


@dataclass(frozen=True)
class TriggerSpec:
    """Trigger threshold ``c * exp(-decay * t)``.

    ``kind`` is either "static" (decay forced to zero) or "dynamic". The
    static trigger is exactly the dynamic one with zero decay.
    """

    kind: str
    threshold: float
    decay: float = 0.0

    def __post_init__(self):
        if self.kind not in (STATIC, DYNAMIC):
            raise ParameterError(f"unknown trigger kind {self.kind!r}")
        if self.threshold <= 0:
            raise ParameterError(f"trigger threshold must be positive, got {self.threshold}")
        if self.kind == STATIC and self.decay != 0.0:
            object.__setattr__(self, "decay", 0.0)
        if self.decay < 0:
            raise ParameterError(f"trigger decay must be nonnegative, got {self.decay}")

    def threshold_at(self, t: float) -> float:
        return self.threshold * math.exp(-self.decay * t)


def trigger_value(spec: TriggerSpec, t: float, error: float) -> float:
    """Trigger function value ``|error| - threshold(t)``; an event fires iff > 0."""
    return abs(error) - spec.threshold_at(t)


@dataclass
class BroadcastState:
    """Last broadcast values and the event log for one simulation run.

    Owned by a single run; separate runs own separate instances. The log
    stores (agent, time, broadcast value) per event, agents 1-based.
    """

    broadcast: NDArray[np.float64]
    last_event_time: NDArray[np.float64]
    events: list[tuple[int, float, float]] = field(default_factory=list)

    @classmethod
    def initial(cls, x0, t0: float) -> "BroadcastState":
        x0 = np.asarray(x0, dtype=float)
        # Broadcasting the initial state keeps the error zero from the start,
        # which is the only initialization respecting the threshold for all c.
        return cls(broadcast=x0.copy(),
                   last_event_time=np.full(x0.size, float(t0)))

    def errors(self, x) -> NDArray[np.float64]:
        return self.broadcast - np.asarray(x, dtype=float)

    def apply_events(self, x, t: float, spec: TriggerSpec) -> list[int]:
        """Fire every agent whose trigger is strictly positive at time ``t``.

        Fired agents broadcast their current state, so their error is exactly
        zero afterwards. Simultaneous crossings fire together with identical
        timestamps. Returns the fired agents (1-based).
        """
        x = np.asarray(x, dtype=float)
        thr = spec.threshold_at(t)
        fired = np.flatnonzero(np.abs(self.broadcast - x) - thr > 0.0)
        for i in fired:
            self.broadcast[i] = x[i]
            self.last_event_time[i] = t
            self.events.append((int(i) + 1, float(t), float(x[i])))
        return [int(i) + 1 for i in fired]


def control_input(incidence, weights, broadcast, gain: float) -> NDArray[np.float64]:
    """Consensus control ``-gain * D diag(w) D^T xhat``.

    The result always sums to zero (the all-ones direction is invariant),
    which is what preserves the state average along trajectories.
    """
    if gain <= 0:
        raise ParameterError(f"gain must be positive, got {gain}")
    d = np.asarray(incidence, dtype=float)
    w = np.asarray(weights, dtype=float)
    xh = np.asarray(broadcast, dtype=float)
    if d.shape[1] != w.shape[0] or d.shape[0] != xh.shape[0]:
        raise GraphError(
            f"dimension mismatch: incidence {d.shape}, weights {w.shape}, "
            f"broadcast {xh.shape}"
        )
    return -gain * (d @ (w * (d.T @ xh)))
