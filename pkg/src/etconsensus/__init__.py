"""Event-triggered consensus of single-integrator agents on time-varying graphs.

Library + CLI for simulating broadcast-based consensus under static and
dynamic trigger rules, certifying excitation of the edge weights, computing
the convergence-bound constants, and checking runs against them.
"""

from ._core import BACKEND, available_backends
from .bounds import (
    ConvergenceBounds,
    EnvelopeCoefficients,
    ExtremalForcing,
    OvershootEstimate,
    certified_bounds,
    envelope_coefficients,
    error_coefficient,
    estimate_overshoot,
    extremal_forcing_coefficients,
    forcing_coefficient_closed_form,
    rate_lower_bound,
    solve_event_gap,
)
from .errors import (
    ConfigError,
    EtConsensusError,
    GraphError,
    NotPersistentlyExciting,
    ParameterError,
    ScheduleError,
    SignalError,
    SimulationError,
)
from .graphs import (
    EdgeStates,
    SpanningDecomposition,
    Topology,
    build_topology,
    decompose,
    edge_states,
    enumerate_spanning_trees,
    kirchhoff_count,
    laplacian_at,
)
from .signals import (
    GateSchedule,
    PECertificate,
    WeightSignal,
    constant_weights,
    function_weights,
    norm_bound,
    sinusoid_weights,
    square_sine_weight,
    square_sine_weights,
    table_weights,
    verify_pe,
)
from .simulate import (
    EnvelopeReport,
    ScheduleCertificate,
    SimResult,
    SwitchingSchedule,
    ZenoReport,
    check_envelope,
    check_zeno,
    default_step,
    reference_oracle,
    simulate,
    validate_schedule,
)
from .triggers import (
    EVENT_TOL,
    BroadcastState,
    TriggerSpec,
    control_input,
    trigger_value,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
