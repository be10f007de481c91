"""Certified convergence constants for the event-triggered consensus loop.

Everything here is derived from four ingredients: the spanning-tree
decomposition, a windowed excitation certificate for the tree-edge weights,
the trigger parameters, and a bound on the reduced transition matrix
(estimated numerically or supplied). From those it produces the contraction
rate bound, the envelope coefficients, the static-trigger ball radius, and
the minimum inter-event gap that rules out accumulation of events.

The envelope derivation requires the trigger's threshold decay to be slower
than the contraction rate bound. Because the rate bound is typically very
conservative, callers may legitimately certify an envelope at any slower
decay (the trigger enforces every slower bound too); see
:func:`certified_bounds` and its ``cap_decay`` policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _core
from .errors import NotPersistentlyExciting, ParameterError
from .graphs import SpanningDecomposition, Topology, decompose, enumerate_spanning_trees
from .signals import PECertificate, WeightSignal, kernel_arrays, verify_pe
from .triggers import TriggerSpec


def rate_lower_bound(gain: float, eig_min: float, eig_norm: float,
                     tree_edge_count: int, excitation_lower: float,
                     excitation_upper: float, window: float) -> float:
    """Per-window contraction rate bound of the reduced dynamics.

    Returns ``(1/2T) * ln(1/b)`` with
    ``b = 1 - 2*k*eig_min*mu1 / (1 + k*sqrt(p)*eig_norm*mu2)^2``; the bracket
    ``b`` must fall in (0, 1) for the result to be a valid positive rate.
    """
    for name, val in (("gain", gain), ("eig_min", eig_min),
                      ("eig_norm", eig_norm), ("window", window),
                      ("excitation_lower", excitation_lower),
                      ("excitation_upper", excitation_upper)):
        if val <= 0:
            raise ParameterError(f"{name} must be positive, got {val}")
    if tree_edge_count < 1:
        raise ParameterError(f"tree_edge_count must be >= 1, got {tree_edge_count}")
    denom = (1.0 + gain * math.sqrt(tree_edge_count) * eig_norm * excitation_upper) ** 2
    bracket = 1.0 - 2.0 * gain * eig_min * excitation_lower / denom
    if not 0.0 < bracket < 1.0:
        raise ParameterError(
            f"contraction bracket {bracket:.6g} outside (0, 1); the rate "
            "hypothesis fails for these parameters"
        )
    return math.log(1.0 / bracket) / (2.0 * window)


def error_coefficient(threshold: float, tree_edge_count: int,
                      basis_norm: float = 1.0) -> float:
    """Bound coefficient for the reduced broadcast error: ``2*c*sqrt(p)*|basis|``.

    With an orthogonal eigenvector basis the basis norm is 1, so this is
    simply ``2*c*sqrt(p)``.
    """
    if threshold <= 0:
        raise ParameterError(f"threshold must be positive, got {threshold}")
    if tree_edge_count < 1:
        raise ParameterError(f"tree_edge_count must be >= 1, got {tree_edge_count}")
    return 2.0 * threshold * math.sqrt(tree_edge_count) * basis_norm


@dataclass(frozen=True)
class EnvelopeCoefficients:
    """Coefficients of the reduced-state envelope
    ``transient * exp(-rate*t) + forcing * exp(-decay*t)``."""

    transient: float  # may be negative when the series term dominates
    forcing: float
    series: float


def envelope_coefficients(gain: float, eig_norm: float, overshoot: float,
                          error_gain: float, excitation_upper: float,
                          window: float, rate: float, decay: float,
                          t_initial: float, initial_reduced_norm: float) -> EnvelopeCoefficients:
    """Envelope coefficients from the window-wise geometric series bound.

    Requires ``decay < rate`` (the series only sums under that hypothesis).
    With zero ``error_gain`` the forcing terms vanish and the envelope
    reduces to the event-free contraction bound.
    """
    if decay < 0:
        raise ParameterError(f"decay must be nonnegative, got {decay}")
    if rate <= 0:
        raise ParameterError(f"rate must be positive, got {rate}")
    if error_gain < 0:
        raise ParameterError(f"error_gain must be nonnegative, got {error_gain}")
    if error_gain > 0 and decay >= rate:
        raise ParameterError(
            f"envelope needs decay < rate; got decay={decay:.6g} >= "
            f"rate={rate:.6g} (certify at a slower decay instead)"
        )
    if error_gain == 0.0:
        series = 0.0
    else:
        gap = rate - decay
        series = (gain * eig_norm * overshoot * error_gain * excitation_upper
                  * math.exp(gap * (t_initial + window))
                  / (math.exp(gap * window) - 1.0))
    forcing = math.exp((rate + decay) * window) * series
    transient = math.exp(rate * t_initial) * overshoot * initial_reduced_norm - series
    return EnvelopeCoefficients(transient=transient, forcing=forcing, series=series)


def forcing_coefficient_closed_form(gain: float, eig_norm: float, overshoot: float,
                                    error_gain: float, excitation_upper: float,
                                    window: float, rate: float,
                                    t_initial: float) -> float:
    """Static-trigger forcing coefficient in closed form,
    ``k*|L|*m*C*exp(rate*t0 + 2*rate*T)*mu2 / (exp(rate*T) - 1)``.

    Equals the zero-decay limit of :func:`envelope_coefficients`'s forcing
    term; kept separate as an independent cross-check.
    """
    if rate <= 0 or window <= 0:
        raise ParameterError("rate and window must be positive")
    return (gain * eig_norm * overshoot * error_gain * excitation_upper
            * math.exp(rate * t_initial + 2.0 * rate * window)
            / (math.exp(rate * window) - 1.0))


def solve_event_gap(rhs: float, decay: float) -> float:
    """Solve ``g * exp(decay*g) = rhs`` for the minimum inter-event gap.

    Zero decay gives ``g = rhs`` directly; otherwise the root is bracketed in
    ``(0, rhs]`` and bisected (in log form, which cannot overflow) until the
    bracket collapses to machine precision, well inside relative 1e-12.
    """
    if rhs <= 0:
        raise ParameterError(f"event-gap equation needs a positive rhs, got {rhs}")
    if decay == 0.0:
        return rhs
    log_rhs = math.log(rhs)
    lo, hi = 0.0, rhs  # g*exp(decay*g) >= g, so the root is <= rhs
    for _ in range(500):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if math.log(mid) + decay * mid > log_rhs:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class OvershootEstimate:
    """Numerically estimated transition-matrix overshoot on a finite horizon."""

    value: float
    peak_time: float
    horizon: tuple[float, float]
    grid_step: float
    source: str = "estimated"


def estimate_overshoot(decomp: SpanningDecomposition, signal: WeightSignal,
                       gain: float, rate: float, horizon: float,
                       grid_step: float, t_initial: float = 0.0,
                       extra_times=(), backend=None) -> OvershootEstimate:
    """Estimate the overshoot constant of the reduced transition matrix.

    Integrates the event-free reduced system from the identity, then takes
    the largest value of ``|transition| * exp(rate * elapsed)`` over the
    grid, clipped below at 1. The estimate is only a certificate on the
    tested horizon, which is recorded. A value still growing in the final
    quarter of the horizon means the rate certificate is violated
    numerically and raises.
    """
    if horizon <= 0 or grid_step <= 0:
        raise ParameterError("horizon and grid_step must be positive")
    impl = backend if backend is not None else _core.get_backend()
    p = decomp.tree_edge_count
    t_end = t_initial + horizon
    count = int(math.ceil(horizon / grid_step))
    nodes = [np.linspace(t_initial, t_end, count + 1)[1:]]
    bps = signal.breakpoints_between(t_initial, t_end)
    if bps.size:
        nodes.append(bps)
    if len(extra_times):
        nodes.append(np.asarray(extra_times, dtype=float))
    record = np.unique(np.concatenate(nodes))
    record = record[(record > t_initial) & (record <= t_end)]

    phi = np.eye(p)
    rec = np.empty((record.size + 1, p, p))
    prog, gate, custom = kernel_arrays(signal)
    if custom is not None:
        impl = _core.get_backend("pure")
        status, rows = impl.run_ltv(phi, t_initial, record, grid_step,
                                    np.ascontiguousarray(decomp.eigenvalues),
                                    np.ascontiguousarray(decomp.reduced_mixing),
                                    *prog, *gate, gain, rec, custom_fn=custom)
    else:
        status, rows = impl.run_ltv(phi, t_initial, record, grid_step,
                                    np.ascontiguousarray(decomp.eigenvalues),
                                    np.ascontiguousarray(decomp.reduced_mixing),
                                    *prog, *gate, gain, rec)
    if status != 0:
        raise ParameterError("reduced propagation failed (non-finite state)")
    times = np.concatenate([[t_initial], record])[:rows]
    norms = np.linalg.svd(rec[:rows], compute_uv=False)[:, 0]
    products = norms * np.exp(rate * (times - t_initial))
    peak = int(np.argmax(products))
    split = t_initial + 0.75 * horizon
    late = products[times >= split]
    early = products[times < split]
    # The relative margin keeps integrator truncation drift (~1e-10 over a
    # long horizon) from masquerading as certificate violation.
    if late.size and early.size and late.max() > early.max() * (1.0 + 1e-6):
        raise ParameterError(
            "overshoot estimate still growing in the final quarter of the "
            f"horizon (late max {late.max():.6g} > early max {early.max():.6g}); "
            "the rate certificate is violated numerically or the horizon is too short"
        )
    value = max(1.0, float(products[peak]))
    return OvershootEstimate(value=value, peak_time=float(times[peak]),
                             horizon=(t_initial, t_end), grid_step=grid_step)


@dataclass(frozen=True)
class ConvergenceBounds:
    """Complete bound bundle for one certified scenario.

    ``decay_certified`` is the decay rate the envelope is certified at; it
    equals the trigger decay whenever that is admissible (slower than the
    contraction rate bound) and is otherwise capped below the rate, with the
    cap recorded in ``provenance``.
    """

    gain: float
    window: float
    excitation_lower: float
    excitation_upper: float
    tree_edge_count: int
    eig_min: float
    eig_norm: float
    rate: float
    overshoot: float
    edge_ratio: float
    error_gain: float
    transient_coeff: float
    forcing_coeff: float
    series_coeff: float
    threshold: float | None
    trigger_decay: float | None
    decay_certified: float
    weight_bound: float
    incidence_norm: float
    t_initial: float
    initial_reduced_norm: float
    min_event_gap: float | None
    excitation: PECertificate
    provenance: dict = field(default_factory=dict)

    @property
    def ball_radius(self) -> float:
        """Asymptotic edge-state ball radius (the envelope limit when the
        certified decay is zero)."""
        return self.edge_ratio * self.forcing_coeff

    def envelope_at(self, t):
        """Certified edge-state envelope
        ``ratio * (transient*exp(-rate*t) + forcing*exp(-decay*t))``."""
        t = np.asarray(t, dtype=float)
        return self.edge_ratio * (
            self.transient_coeff * np.exp(-self.rate * t)
            + self.forcing_coeff * np.exp(-self.decay_certified * t)
        )

    def to_dict(self) -> dict:
        return {
            "gain": self.gain,
            "window": self.window,
            "excitation_lower": self.excitation_lower,
            "excitation_upper": self.excitation_upper,
            "tree_edge_count": self.tree_edge_count,
            "eig_min": self.eig_min,
            "eig_norm": self.eig_norm,
            "rate": self.rate,
            "overshoot": self.overshoot,
            "edge_ratio": self.edge_ratio,
            "error_gain": self.error_gain,
            "transient_coeff": self.transient_coeff,
            "forcing_coeff": self.forcing_coeff,
            "series_coeff": self.series_coeff,
            "ball_radius": self.ball_radius,
            "threshold": self.threshold,
            "trigger_decay": self.trigger_decay,
            "decay_certified": self.decay_certified,
            "weight_bound": self.weight_bound,
            "incidence_norm": self.incidence_norm,
            "t_initial": self.t_initial,
            "initial_reduced_norm": self.initial_reduced_norm,
            "min_event_gap": self.min_event_gap,
            "excitation": {
                "window": self.excitation.window,
                "lower": self.excitation.lower,
                "upper": self.excitation.upper,
                "windows_checked": self.excitation.windows_checked,
                "grid_step": self.excitation.grid_step,
                "horizon": list(self.excitation.horizon),
                "tree_edges": list(self.excitation.tree_edges),
            },
            "provenance": dict(self.provenance),
        }


def certified_bounds(decomp: SpanningDecomposition, excitation: PECertificate,
                     trigger: TriggerSpec | None, gain: float,
                     initial_state, weight_bound: float,
                     overshoot: float | OvershootEstimate,
                     t_initial: float = 0.0,
                     cap_decay: bool = False,
                     cap_fraction: float = 0.5) -> ConvergenceBounds:
    """Assemble the full bound bundle for one scenario.

    Args:
        trigger: the trigger in force, or None for continuous control (no
            broadcast error; the envelope reduces to the contraction bound).
        overshoot: transition-matrix overshoot, either a supplied float or an
            :class:`OvershootEstimate`.
        cap_decay: when the trigger decay is not slower than the contraction
            rate bound, certify the envelope at ``cap_fraction * rate``
            instead of failing. The trigger keeps every slower bound valid,
            so the capped envelope is still rigorous; the cap is recorded in
            the provenance. Without this flag the inadmissible case raises.

    Raises:
        ParameterError: trigger decay >= rate without ``cap_decay``, or any
            constituent computation outside its hypotheses.
    """
    rate = rate_lower_bound(gain, decomp.eigenvalue_min, decomp.eigenvalue_norm,
                            decomp.tree_edge_count, excitation.lower,
                            excitation.upper, excitation.window)
    provenance: dict = {}
    if isinstance(overshoot, OvershootEstimate):
        provenance["overshoot"] = (
            f"estimated on [{overshoot.horizon[0]:.6g}, {overshoot.horizon[1]:.6g}] "
            f"at grid step {overshoot.grid_step:.6g}"
        )
        overshoot_value = overshoot.value
    else:
        provenance["overshoot"] = "supplied"
        overshoot_value = float(overshoot)
    if overshoot_value < 1.0:
        raise ParameterError(
            f"overshoot must be >= 1 (transition matrix starts at identity), "
            f"got {overshoot_value}"
        )
    provenance["excitation_horizon"] = (
        f"certified on [{excitation.horizon[0]:.6g}, {excitation.horizon[1]:.6g}]"
    )

    x0 = np.asarray(initial_state, dtype=float)
    reduced0 = decomp.reduced_projection @ x0
    initial_reduced_norm = float(np.linalg.norm(reduced0))

    if trigger is None:
        error_gain = 0.0
        threshold = None
        trigger_decay = None
        decay_certified = 0.0
        provenance["trigger"] = "continuous control (no broadcast error)"
    else:
        error_gain = error_coefficient(trigger.threshold, decomp.tree_edge_count,
                                       decomp.basis_norm())
        threshold = trigger.threshold
        trigger_decay = trigger.decay
        if trigger.decay < rate:
            decay_certified = trigger.decay
        elif cap_decay:
            decay_certified = cap_fraction * rate
            provenance["decay_certified"] = (
                f"trigger decay {trigger.decay:.6g} >= rate bound {rate:.6g}; "
                f"envelope certified at the admissible decay "
                f"{decay_certified:.6g} = {cap_fraction} * rate (the trigger "
                "threshold bounds every slower exponential)"
            )
        else:
            raise ParameterError(
                f"trigger decay {trigger.decay:.6g} is not below the "
                f"contraction rate bound {rate:.6g}; the envelope hypothesis "
                "fails (enable decay capping to certify at a slower decay)"
            )

    coeffs = envelope_coefficients(gain, decomp.eigenvalue_norm, overshoot_value,
                                   error_gain, excitation.upper,
                                   excitation.window, rate, decay_certified,
                                   t_initial, initial_reduced_norm)

    min_event_gap = None
    if trigger is not None:
        denominator = (gain * decomp.edge_state_ratio * weight_bound
                       * decomp.topology.incidence_norm()
                       * (coeffs.transient + coeffs.forcing))
        if denominator > 0:
            min_event_gap = solve_event_gap(trigger.threshold / denominator,
                                            trigger.decay)
        else:
            provenance["min_event_gap"] = (
                "coefficient sum not positive; gap bound unavailable"
            )

    return ConvergenceBounds(
        gain=gain, window=excitation.window,
        excitation_lower=excitation.lower, excitation_upper=excitation.upper,
        tree_edge_count=decomp.tree_edge_count,
        eig_min=decomp.eigenvalue_min, eig_norm=decomp.eigenvalue_norm,
        rate=rate, overshoot=overshoot_value,
        edge_ratio=decomp.edge_state_ratio, error_gain=error_gain,
        transient_coeff=coeffs.transient, forcing_coeff=coeffs.forcing,
        series_coeff=coeffs.series, threshold=threshold,
        trigger_decay=trigger_decay, decay_certified=decay_certified,
        weight_bound=weight_bound,
        incidence_norm=decomp.topology.incidence_norm(),
        t_initial=t_initial, initial_reduced_norm=initial_reduced_norm,
        min_event_gap=min_event_gap, excitation=excitation,
        provenance=provenance,
    )


@dataclass(frozen=True)
class ExtremalForcing:
    """Smallest and largest forcing coefficients over the certifiable trees.

    Trees whose edge weights fail the excitation check carry no coefficient;
    they are listed in ``skipped`` with the failure reason.
    """

    minimum: float
    maximum: float
    tree_min: tuple[int, ...]
    tree_max: tuple[int, ...]
    per_tree: tuple[tuple[tuple[int, ...], float], ...]
    skipped: tuple[tuple[tuple[int, ...], str], ...] = ()


def extremal_forcing_coefficients(topology: Topology, signal: WeightSignal,
                                  trigger: TriggerSpec, gain: float,
                                  window: float, t_start: float, t_end: float,
                                  grid_step: float,
                                  overshoot_horizon: float | None = None,
                                  overshoot_grid: float | None = None,
                                  cap_fraction: float = 0.5,
                                  tree_cap: int = 10_000) -> ExtremalForcing:
    """Forcing coefficient extremes across every spanning tree.

    Each tree gets its own decomposition, excitation certificate restricted
    to its edges, rate bound, and overshoot estimate. Trees are visited in
    lexicographic edge-index order and ties keep the first achiever, so the
    result is deterministic.
    """
    trees = enumerate_spanning_trees(topology, cap=tree_cap)
    if overshoot_horizon is None:
        overshoot_horizon = min(10.0 * window, t_end - t_start)
    if overshoot_grid is None:
        overshoot_grid = min(grid_step * 2.0, window / 100.0)
    results = []
    skipped = []
    for tree in trees:
        decomp = decompose(topology, tree_hint=list(tree))
        try:
            cert = verify_pe(signal, decomp.tree_edges, window, t_start, t_end,
                             grid_step)
        except NotPersistentlyExciting as exc:
            skipped.append((tree, str(exc)))
            continue
        rate = rate_lower_bound(gain, decomp.eigenvalue_min,
                                decomp.eigenvalue_norm, decomp.tree_edge_count,
                                cert.lower, cert.upper, cert.window)
        decay = trigger.decay if trigger.decay < rate else cap_fraction * rate
        est = estimate_overshoot(decomp, signal, gain, rate, overshoot_horizon,
                                 overshoot_grid, t_initial=t_start)
        error_gain = error_coefficient(trigger.threshold,
                                       decomp.tree_edge_count,
                                       decomp.basis_norm())
        coeffs = envelope_coefficients(gain, decomp.eigenvalue_norm, est.value,
                                       error_gain, cert.upper, cert.window,
                                       rate, decay, t_start, 0.0)
        results.append((tree, coeffs.forcing))
    if not results:
        raise NotPersistentlyExciting(
            "no spanning tree has persistently exciting weights on the "
            "tested horizon"
        )
    best_min = min(results, key=lambda item: item[1])
    best_max = max(results, key=lambda item: item[1])
    return ExtremalForcing(minimum=best_min[1], maximum=best_max[1],
                           tree_min=best_min[0], tree_max=best_max[0],
                           per_tree=tuple(results), skipped=tuple(skipped))
