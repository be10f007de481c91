"""Event-detecting simulation of the closed consensus loop.

Integrates ``x' = -gain * D diag(w(t)) D^T xhat`` with a classical
fourth-order fixed-step method, splitting steps exactly at weight
breakpoints, topology switches, and bisection-localized trigger crossings.
Switching topologies are realized as 0/1 gates on the edges of a fixed
union graph, which keeps every run on one incidence matrix and makes the
reported edge-state series directly comparable with the certified envelope.

A first-order reference integrator with identical event semantics is
provided for cross-checking trajectories and event times in tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from . import _core
from .bounds import ConvergenceBounds
from .errors import ScheduleError, SignalError, SimulationError
from .graphs import SpanningDecomposition, Topology, decompose
from .signals import GateSchedule, WeightSignal, kernel_arrays
from .triggers import EVENT_TOL, TriggerSpec

DEFAULT_MAX_EVENTS = 500_000


@dataclass(frozen=True)
class SwitchingSchedule:
    """Dwell-constrained switching between named edge subsets of one graph.

    ``entries`` lists (start_time, subgraph_id); each subgraph id maps to the
    1-based edge indices of the union topology that are active while it
    holds. ``union_windows`` are the contiguous intervals over which the
    union of active edge sets must contain a spanning tree.
    """

    entries: tuple[tuple[float, str], ...]
    dwell_min: float
    subgraphs: dict[str, tuple[int, ...]]
    union_windows: tuple[tuple[float, float], ...] = ()

    @staticmethod
    def alternating(subgraphs: dict[str, tuple[int, ...]], order, dwell: float,
                    t_start: float, t_end: float,
                    window_span: int | None = None) -> "SwitchingSchedule":
        """Periodic alternation through ``order`` with equal dwell times.

        ``window_span`` entries per union window (default: one full cycle).
        """
        order = list(order)
        if window_span is None:
            window_span = len(order)
        entries = []
        t = t_start
        k = 0
        while t < t_end:
            entries.append((t, order[k % len(order)]))
            t += dwell
            k += 1
        windows = []
        for j in range(0, len(entries), window_span):
            a = entries[j][0]
            b = entries[j + window_span][0] if j + window_span < len(entries) else t
            windows.append((a, b))
        return SwitchingSchedule(entries=tuple(entries), dwell_min=dwell,
                                 subgraphs=dict(subgraphs),
                                 union_windows=tuple(windows))


@dataclass(frozen=True)
class ScheduleCertificate:
    """Outcome of schedule validation: dwell floor and window union checks."""

    dwell_observed: float
    windows_checked: int
    max_window_length: float


def _edges_connect(topology: Topology, edge_idx) -> bool:
    """True when the given edges alone connect every node."""
    parent = list(range(topology.node_count))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for j in edge_idx:
        tail, head = topology.edges[j - 1]
        ra, rb = find(tail - 1), find(head - 1)
        if ra != rb:
            parent[ra] = rb
    root = find(0)
    return all(find(i) == root for i in range(topology.node_count))


def validate_schedule(schedule: SwitchingSchedule,
                      topology: Topology) -> ScheduleCertificate:
    """Check dwell, window contiguity, and per-window union connectivity.

    Raises:
        ScheduleError: naming the violated hypothesis (and the window, for
            union-connectivity failures).
    """
    entries = schedule.entries
    if not entries:
        raise ScheduleError("schedule has no entries")
    times = [t for t, _ in entries]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ScheduleError("schedule entry times must be strictly increasing")
    for name in {name for _, name in entries}:
        if name not in schedule.subgraphs:
            raise ScheduleError(f"schedule references unknown subgraph {name!r}")
        for j in schedule.subgraphs[name]:
            if not 1 <= j <= topology.edge_count:
                raise ScheduleError(
                    f"subgraph {name!r} references edge {j} outside "
                    f"1..{topology.edge_count}"
                )
    dwell = min((b - a for a, b in zip(times, times[1:])), default=math.inf)
    if dwell < schedule.dwell_min - 1e-12:
        raise ScheduleError(
            f"observed dwell {dwell:.6g} is below the declared minimum "
            f"{schedule.dwell_min:.6g}"
        )
    windows = schedule.union_windows
    if not windows:
        raise ScheduleError("schedule declares no union windows")
    for (a0, b0), (a1, _) in zip(windows, windows[1:]):
        if abs(b0 - a1) > 1e-9:
            raise ScheduleError(
                f"union windows [{a0:.6g}, {b0:.6g}] and [{a1:.6g}, ...] are "
                "not contiguous"
            )
    max_len = 0.0
    for a, b in windows:
        if b <= a:
            raise ScheduleError(f"union window [{a:.6g}, {b:.6g}] is empty")
        max_len = max(max_len, b - a)
        active: set[int] = set()
        for idx, (start, name) in enumerate(entries):
            end = times[idx + 1] if idx + 1 < len(times) else math.inf
            if start < b and end > a:
                active.update(schedule.subgraphs[name])
        if not _edges_connect(topology, sorted(active)):
            raise ScheduleError(
                f"union of active edges over window [{a:.6g}, {b:.6g}] does "
                "not contain a spanning tree"
            )
    return ScheduleCertificate(dwell_observed=float(dwell),
                               windows_checked=len(windows),
                               max_window_length=float(max_len))


def schedule_gate(schedule: SwitchingSchedule, topology: Topology) -> GateSchedule:
    """0/1 edge masks realizing the schedule on the union topology."""
    starts = np.array([t for t, _ in schedule.entries], dtype=float)
    masks = np.zeros((len(schedule.entries), topology.edge_count))
    for row, (_, name) in enumerate(schedule.entries):
        for j in schedule.subgraphs[name]:
            masks[row, j - 1] = 1.0
    return GateSchedule(start_times=starts, masks=masks)


@dataclass
class SimResult:
    """Trajectories, broadcast values, event log, and derived series.

    ``edge_norm`` is taken over all edges of the (union) topology;
    ``edge_norm_active`` masks edges by the schedule (identical without
    one). Events are (agent, time, broadcast value) with 1-based agents.
    """

    times: NDArray[np.float64]
    states: NDArray[np.float64]  # (samples, n)
    broadcasts: NDArray[np.float64]
    edge_norm: NDArray[np.float64]
    edge_norm_active: NDArray[np.float64]
    reduced_norm: NDArray[np.float64]
    events: tuple[tuple[int, float, float], ...]
    consensus_value: float
    trigger: TriggerSpec | None
    step: float
    backend: str
    method_order: int
    envelope: NDArray[np.float64] | None = None
    extra: dict = field(default_factory=dict)

    @property
    def node_count(self) -> int:
        return self.states.shape[1]

    def min_inter_event(self) -> dict[int, float]:
        """Per-agent smallest gap between consecutive events."""
        by_agent: dict[int, list[float]] = {}
        for agent, t, _ in self.events:
            by_agent.setdefault(agent, []).append(t)
        return {
            agent: min((b - a for a, b in zip(ts, ts[1:])), default=math.inf)
            for agent, ts in by_agent.items()
        }

    def mean_drift(self) -> float:
        """Largest deviation of the state mean from its initial value."""
        means = self.states.mean(axis=1)
        return float(np.abs(means - self.consensus_value).max())


def default_step(pe_window: float | None = None,
                 dwell: float | None = None) -> float:
    """Default integration step: resolve the excitation window, the trigger
    dynamics, and the dwell interval, whichever is finest."""
    candidates = [1e-2]
    if pe_window is not None:
        candidates.append(pe_window / 200.0)
    if dwell is not None:
        candidates.append(dwell / 50.0)
    return min(candidates)


def _merge_times(t0, t_end, step, extras):
    count = int(math.ceil((t_end - t0) / step - 1e-9))
    anchors = t0 + step * np.arange(1, count + 1)
    pieces = [anchors, np.array([t_end])]
    for arr in extras:
        arr = np.asarray(arr, dtype=float)
        pieces.append(arr[(arr > t0) & (arr <= t_end)])
    merged = np.unique(np.concatenate(pieces))
    merged = merged[(merged > t0) & (merged <= t_end + 1e-12)]
    keep = np.ones(merged.size, dtype=bool)
    keep[1:] = np.diff(merged) > 1e-12
    merged = merged[keep]
    merged[-1] = t_end
    return merged


def _active_mask_per_sample(times, gate: GateSchedule | None, edge_count):
    if gate is None:
        return np.ones((times.size, edge_count))
    seg = np.clip(np.searchsorted(gate.start_times, times, side="right") - 1,
                  0, len(gate.start_times) - 1)
    return gate.masks[seg]


def _run(topology, signal, trigger, gain, x0, t0, t_end, step, sub_step,
         method, schedule, decomp, extra_times, eps_event, max_events,
         backend, bounds):
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (topology.node_count,):
        raise SimulationError(
            f"x0 must have length {topology.node_count}, got shape {x0.shape}"
        )
    if t_end <= t0:
        raise SimulationError(f"t_end {t_end} must exceed t0 {t0}")
    if signal.edge_count != topology.edge_count:
        raise SimulationError(
            f"signal covers {signal.edge_count} edges, topology has "
            f"{topology.edge_count}"
        )
    gated = signal
    if schedule is not None:
        validate_schedule(schedule, topology)
        if schedule.entries[0][0] > t0 + 1e-12:
            raise ScheduleError(
                f"schedule starts at {schedule.entries[0][0]:.6g}, after t0={t0:.6g}"
            )
        gated = signal.with_gate(schedule_gate(schedule, topology))

    prog, gate_arrays, custom = kernel_arrays(gated)
    backend_name = backend or _core.BACKEND
    if custom is not None:
        if backend == "compiled":
            raise SignalError(
                "compiled kernels need a built-in weight family; this signal "
                "wraps an arbitrary callable (use the pure backend)"
            )
        backend_name = "pure"
    impl = _core.get_backend(backend_name)

    bps = gated.breakpoints_between(t0, t_end)
    record = _merge_times(t0, t_end, step, [bps] + list(extra_times or []))

    n = topology.node_count
    rows_cap = record.size + 1 + max_events + 8
    rec_t = np.empty(rows_cap)
    rec_x = np.empty((rows_cap, n))
    rec_xh = np.empty((rows_cap, n))
    ev_agent = np.empty(max_events, dtype=np.int64)
    ev_time = np.empty(max_events)
    ev_value = np.empty(max_events)

    x = x0.copy()
    xhat = x0.copy()
    continuous = trigger is None
    thr_c = 0.0 if continuous else trigger.threshold
    thr_decay = 0.0 if continuous else trigger.decay
    incidence = np.ascontiguousarray(topology.incidence)

    kwargs = {"custom_fn": custom} if custom is not None else {}
    status, n_rows, n_events = impl.run_hybrid(
        x, xhat, float(t0), record, float(sub_step), int(method), incidence,
        *prog, *gate_arrays, float(gain), float(thr_c), float(thr_decay),
        bool(continuous), float(eps_event), rec_t, rec_x, rec_xh,
        ev_agent, ev_time, ev_value, **kwargs)
    if status == 1:
        raise SimulationError(
            f"event buffer overflow after {n_events} events at "
            f"t={rec_t[n_rows - 1]:.6g}; raise max_events or the threshold"
        )
    if status == 2:
        raise SimulationError(
            f"state became non-finite near t={rec_t[n_rows - 1]:.6g}; "
            "check gain/weight magnitudes and the step size"
        )

    times = rec_t[:n_rows].copy()
    states = rec_x[:n_rows].copy()
    broadcasts = rec_xh[:n_rows].copy()
    events = tuple(
        (int(ev_agent[i]), float(ev_time[i]), float(ev_value[i]))
        for i in range(n_events)
    )

    edge_vals = states @ topology.incidence  # (samples, m)
    edge_norm = np.linalg.norm(edge_vals, axis=1)
    mask = _active_mask_per_sample(times, gated.gate, topology.edge_count)
    edge_norm_active = np.linalg.norm(edge_vals * mask, axis=1)
    reduced = states @ decomp.reduced_projection.T
    reduced_norm = np.linalg.norm(reduced, axis=1)
    envelope = bounds.envelope_at(times) if bounds is not None else None

    return SimResult(
        times=times, states=states, broadcasts=broadcasts,
        edge_norm=edge_norm, edge_norm_active=edge_norm_active,
        reduced_norm=reduced_norm, events=events,
        consensus_value=float(x0.mean()), trigger=trigger, step=float(step),
        backend=backend_name, method_order=4 if method == 4 else 1,
        envelope=envelope,
    )


def simulate(topology: Topology, signal: WeightSignal,
             trigger: TriggerSpec | None, gain: float, x0, t0: float,
             t_end: float, step: float | None = None,
             schedule: SwitchingSchedule | None = None,
             decomp: SpanningDecomposition | None = None,
             tree_hint=None, extra_times=(), eps_event: float = EVENT_TOL,
             max_events: int = DEFAULT_MAX_EVENTS, backend: str | None = None,
             bounds: ConvergenceBounds | None = None,
             pe_window: float | None = None) -> SimResult:
    """Fixed-step fourth-order run of the event-triggered consensus loop.

    ``trigger=None`` simulates continuous control (broadcasts track states
    exactly and no events fire). With a schedule, the topology is the union
    graph and inactive edges are gated to zero weight. Identical inputs
    produce identical results bit for bit.
    """
    if step is None:
        dwell = schedule.dwell_min if schedule is not None else None
        step = default_step(pe_window, dwell)
    if step <= 0:
        raise SimulationError(f"step must be positive, got {step}")
    if decomp is None:
        decomp = decompose(topology, tree_hint=tree_hint)
    return _run(topology, signal, trigger, gain, x0, t0, t_end, step, step,
                4, schedule, decomp, extra_times, eps_event, max_events,
                backend, bounds)


def reference_oracle(topology: Topology, signal: WeightSignal,
                     trigger: TriggerSpec | None, gain: float, x0, t0: float,
                     t_end: float, step: float, fine_step: float,
                     schedule: SwitchingSchedule | None = None,
                     decomp: SpanningDecomposition | None = None,
                     tree_hint=None, extra_times=(),
                     eps_event: float = EVENT_TOL,
                     max_events: int = DEFAULT_MAX_EVENTS,
                     backend: str | None = None) -> SimResult:
    """First-order reference run with identical event semantics.

    Samples are recorded on the same grid as :func:`simulate` at ``step``,
    while integration advances at ``fine_step`` (at most a tenth of the
    step). Intended for tests.
    """
    if fine_step > step / 10.0:
        raise SimulationError(
            f"fine_step {fine_step} must be <= step/10 = {step / 10.0}"
        )
    if decomp is None:
        decomp = decompose(topology, tree_hint=tree_hint)
    return _run(topology, signal, trigger, gain, x0, t0, t_end, step,
                fine_step, 1, schedule, decomp, extra_times, eps_event,
                max_events, backend, None)


@dataclass(frozen=True)
class EnvelopeReport:
    """Sample-wise comparison of the edge-state norm with the envelope."""

    passed: bool
    violations: tuple[tuple[float, float, float], ...]  # (t, value, bound)
    min_margin: float
    slack: float

    def __str__(self):
        if self.passed:
            return (f"envelope containment: pass "
                    f"(min margin {self.min_margin:.3e}, slack {self.slack:g})")
        worst = min(self.violations, key=lambda v: v[2] - v[1])
        return (f"envelope containment: FAIL at t={worst[0]:.6g} "
                f"(value {worst[1]:.6g} > bound {worst[2]:.6g})")


def check_envelope(result: SimResult, bounds: ConvergenceBounds,
                   slack: float = 1e-6) -> EnvelopeReport:
    """Verify the edge-state norm stays under the certified envelope.

    The comparison uses the union-graph edge norm at every recorded sample;
    ``slack`` absorbs event-localization error.
    """
    env = bounds.envelope_at(result.times)
    margin = env + slack - result.edge_norm
    bad = np.flatnonzero(margin < 0.0)
    violations = tuple(
        (float(result.times[i]), float(result.edge_norm[i]), float(env[i]))
        for i in bad
    )
    return EnvelopeReport(passed=bad.size == 0, violations=violations,
                          min_margin=float(margin.min()), slack=slack)


@dataclass(frozen=True)
class ZenoReport:
    """Observed per-agent minimum inter-event gaps against the certified bound."""

    passed: bool
    gap_bound: float | None
    observed: dict[int, float]
    flagged: tuple[int, ...]
    slack: float

    def __str__(self):
        if self.gap_bound is None:
            return "event-gap check: no certified bound (vacuous pass)"
        worst = min(self.observed.values(), default=math.inf)
        state = "pass" if self.passed else f"FAIL for agents {self.flagged}"
        return (f"event-gap check: {state} (bound {self.gap_bound:.3e}, "
                f"smallest observed {worst:.3e})")


def check_zeno(result: SimResult, bounds: ConvergenceBounds,
               slack: float = EVENT_TOL) -> ZenoReport:
    """Compare observed inter-event gaps with the certified minimum gap.

    Gaps below ``gap_bound - slack`` are flagged. An empty event log passes
    vacuously.
    """
    observed = result.min_inter_event()
    gap = bounds.min_event_gap
    if gap is None or not observed:
        return ZenoReport(passed=True, gap_bound=gap, observed=observed,
                          flagged=(), slack=slack)
    flagged = tuple(sorted(a for a, g in observed.items() if g < gap - slack))
    return ZenoReport(passed=not flagged, gap_bound=gap, observed=observed,
                      flagged=flagged, slack=slack)
