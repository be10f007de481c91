"""Time-varying edge-weight signals and excitation certificates.

A :class:`WeightSignal` maps time to one nonnegative weight per edge. The
built-in families (constant, sinusoid, square-gated sinusoid, sample table)
carry a small "program" describing each edge, which lets the compiled
simulation kernels evaluate them natively; arbitrary Python callables are
also accepted and fall back to the pure kernels.

Excitation is certified numerically: sliding windows of a fixed length are
scanned over the requested horizon and the per-edge integrals of the squared
weights must stay inside a positive band. The certificate records the tested
horizon; nothing is claimed beyond it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import NDArray

from .errors import NotPersistentlyExciting, SignalError

FAM_ZERO = 0
FAM_CONST = 1
FAM_SINE = 2
FAM_SQUARE_SINE = 3
FAM_TABLE = 4

_BP_SHIFT = 1e-9  # inward offset used to sample one-sided limits at jumps


@dataclass(frozen=True)
class SignalProgram:
    """Per-edge family codes and parameters, interpretable by both kernels."""

    codes: NDArray[np.int32]  # (m,)
    params: NDArray[np.float64]  # (m, 6)
    table_times: NDArray[np.float64]  # shared sample times, possibly empty
    table_values: NDArray[np.float64]  # (m, K), possibly empty


@dataclass(frozen=True)
class GateSchedule:
    """Piecewise-constant 0/1 edge masks applied on top of a base signal.

    Segment ``s`` is active on ``[start_times[s], start_times[s+1])``; the
    last segment extends to infinity. Times before ``start_times[0]`` use the
    first mask.
    """

    start_times: NDArray[np.float64]  # (n_seg,), strictly increasing
    masks: NDArray[np.float64]  # (n_seg, m), entries in {0, 1}

    def segment_at(self, t: float) -> int:
        i = int(np.searchsorted(self.start_times, t, side="right")) - 1
        return min(max(i, 0), len(self.start_times) - 1)


class WeightSignal:
    """Piecewise-continuous nonnegative diagonal edge-weight trajectory.

    Args:
        edge_count: number of edges m.
        omega: declared upper bound on every weight (diagonal matrix norm).
        program: optional built-in family description (enables the compiled
            simulation kernels).
        eval_fn: used when no program is given; maps a float time to an
            (m,) array.
        breakpoint_fn: returns discontinuity/kink times inside a horizon.
        gate: optional switching gate multiplied onto the base signal.
    """

    def __init__(self, edge_count, omega, program=None, eval_fn=None,
                 breakpoint_fn=None, gate=None):
        if program is None and eval_fn is None:
            raise SignalError("signal needs a program or an eval function")
        if omega < 0:
            raise SignalError(f"weight bound must be nonnegative, got {omega}")
        self.edge_count = int(edge_count)
        self.omega = float(omega)
        self.program = program
        self._eval_fn = eval_fn
        self._breakpoint_fn = breakpoint_fn
        self.gate = gate

    def with_gate(self, gate: GateSchedule) -> "WeightSignal":
        if self.gate is not None:
            raise SignalError("signal is already gated")
        if gate.masks.shape[1] != self.edge_count:
            raise SignalError(
                f"gate masks have {gate.masks.shape[1]} columns, "
                f"expected {self.edge_count}"
            )
        return WeightSignal(self.edge_count, self.omega, program=self.program,
                            eval_fn=self._eval_fn,
                            breakpoint_fn=self._breakpoint_fn, gate=gate)

    # -- evaluation ------------------------------------------------------

    def eval_grid(self, ts) -> NDArray[np.float64]:
        """Weights at each time in ``ts``; shape (len(ts), edge_count)."""
        ts = np.asarray(ts, dtype=float)
        if self.program is not None:
            out = _eval_program(self.program, ts)
        else:
            out = np.empty((ts.size, self.edge_count))
            for i, t in enumerate(ts.ravel()):
                row = np.asarray(self._eval_fn(float(t)), dtype=float)
                if row.shape != (self.edge_count,):
                    raise SignalError(
                        f"signal function returned shape {row.shape}, "
                        f"expected ({self.edge_count},)"
                    )
                out[i] = row
        if self.gate is not None:
            seg = np.clip(
                np.searchsorted(self.gate.start_times, ts, side="right") - 1,
                0, len(self.gate.start_times) - 1,
            )
            out = out * self.gate.masks[seg]
        return out

    def eval(self, t: float) -> NDArray[np.float64]:
        return self.eval_grid(np.array([float(t)]))[0]

    # -- structure -------------------------------------------------------

    def breakpoints_between(self, t_start: float, t_end: float) -> NDArray[np.float64]:
        """Sorted discontinuity and kink times in the open interval."""
        pts: list[np.ndarray] = []
        if self.program is not None:
            pts.append(_program_breakpoints(self.program, t_start, t_end))
        elif self._breakpoint_fn is not None:
            pts.append(np.asarray(self._breakpoint_fn(t_start, t_end), dtype=float))
        if self.gate is not None:
            g = self.gate.start_times
            pts.append(g[(g > t_start) & (g < t_end)])
        if not pts:
            return np.empty(0)
        allpts = np.unique(np.concatenate(pts))
        return allpts[(allpts > t_start) & (allpts < t_end)]


# -- built-in families ----------------------------------------------------


def square_wave(t, rate: float, duty: float):
    """Unit square wave of period ``2*pi/rate``; +1 on the first ``duty`` percent."""
    u = np.mod(rate * np.asarray(t, dtype=float), 2.0 * np.pi)
    return np.where(u < 2.0 * np.pi * duty / 100.0, 1.0, -1.0)


def square_sine_weight(edge_index: int, rate: float = 4.0, duty: float | None = None,
                       shift: float = 1.0, sine_freq: float = 5.0,
                       amplitude: float = 1.0, clamp: bool = True):
    """Scalar weight function for one edge of the square-gated sinusoid family.

    The wave ``(square(rate*t, duty) + shift) * amplitude * sin(sine_freq*t)``
    is clamped at zero by default, which keeps weights admissible and leaves
    stretches where the edge is inactive. ``duty`` defaults to
    ``20 - (edge_index - 1) * 0.1 * pi`` percent. Pass ``clamp=False`` to
    inspect the unclamped waveform (not admissible as an edge weight).
    """
    if duty is None:
        duty = 20.0 - (edge_index - 1) * 0.1 * math.pi
    if rate <= 0:
        raise SignalError(f"square-wave rate must be positive, got {rate}")
    if not 0.0 < duty <= 100.0:
        raise SignalError(f"duty cycle must be in (0, 100], got {duty}")

    def f(t):
        raw = (square_wave(t, rate, duty) + shift) * amplitude * np.sin(sine_freq * np.asarray(t, dtype=float))
        return np.maximum(0.0, raw) if clamp else raw

    return f


def square_sine_weights(edge_count: int, inactive=(), rate: float = 4.0,
                        duty_base: float = 20.0, duty_step: float = 0.1 * math.pi,
                        shift: float = 1.0, sine_freq: float = 5.0,
                        amplitude: float = 1.0, clamp: bool = True) -> WeightSignal:
    """Square-gated sinusoid family across all edges.

    Edge ``i`` (1-based) gets duty ``duty_base - (i-1)*duty_step`` percent;
    edges listed in ``inactive`` are identically zero.
    """
    if rate <= 0:
        raise SignalError(f"square-wave rate must be positive, got {rate}")
    codes = np.full(edge_count, FAM_SQUARE_SINE, dtype=np.int32)
    params = np.zeros((edge_count, 6))
    for i in range(edge_count):
        duty = duty_base - i * duty_step
        if not 0.0 < duty <= 100.0:
            raise SignalError(f"edge {i + 1} duty cycle {duty} outside (0, 100]")
        params[i] = (rate, duty, shift, sine_freq, amplitude, 1.0 if clamp else 0.0)
    for j in inactive:
        codes[j - 1] = FAM_ZERO
        params[j - 1] = 0.0
    omega = amplitude * (1.0 + abs(shift))
    program = SignalProgram(codes, params, np.empty(0), np.empty((edge_count, 0)))
    return WeightSignal(edge_count, omega, program=program)


def constant_weights(values) -> WeightSignal:
    vals = np.asarray(values, dtype=float)
    if np.any(vals < 0):
        raise SignalError("constant weights must be nonnegative")
    m = vals.size
    codes = np.where(vals == 0.0, FAM_ZERO, FAM_CONST).astype(np.int32)
    params = np.zeros((m, 6))
    params[:, 0] = vals
    program = SignalProgram(codes, params, np.empty(0), np.empty((m, 0)))
    return WeightSignal(m, float(vals.max(initial=0.0)), program=program)


def sinusoid_weights(specs, clamp: bool = True) -> WeightSignal:
    """Per-edge ``amp*sin(freq*t + phase) + offset`` weights.

    ``specs`` is a sequence of (amp, freq, phase, offset) tuples. Unless the
    offset dominates the amplitude the waveform is clamped at zero to stay
    admissible.
    """
    m = len(specs)
    codes = np.full(m, FAM_SINE, dtype=np.int32)
    params = np.zeros((m, 6))
    omega = 0.0
    for i, (amp, freq, phase, offset) in enumerate(specs):
        if not clamp and offset < abs(amp):
            raise SignalError(
                f"edge {i + 1} sinusoid dips below zero; clamp it or raise the offset"
            )
        params[i] = (amp, freq, phase, offset, 1.0 if clamp else 0.0, 0.0)
        omega = max(omega, abs(amp) + max(offset, 0.0))
    program = SignalProgram(codes, params, np.empty(0), np.empty((m, 0)))
    return WeightSignal(m, omega, program=program)


def table_weights(times, values) -> WeightSignal:
    """Linear interpolation through (time, weight) samples; constant outside."""
    ts = np.asarray(times, dtype=float)
    vals = np.asarray(values, dtype=float)
    if vals.ndim != 2 or vals.shape[1] != ts.size:
        raise SignalError(
            f"table values must be (edges, {ts.size}), got {vals.shape}"
        )
    if ts.size < 2 or np.any(np.diff(ts) <= 0):
        raise SignalError("table times must be strictly increasing, length >= 2")
    if np.any(vals < 0):
        raise SignalError("table weights must be nonnegative")
    m = vals.shape[0]
    codes = np.full(m, FAM_TABLE, dtype=np.int32)
    params = np.zeros((m, 6))
    program = SignalProgram(codes, params, ts.copy(), vals.copy())
    return WeightSignal(m, float(vals.max(initial=0.0)), program=program)


def function_weights(edge_count, fn, omega, breakpoints=None) -> WeightSignal:
    """Wrap an arbitrary callable ``t -> (m,) weights``.

    Such signals are evaluated in Python, so simulations using them always
    run on the pure kernels.
    """
    bp_fn = None
    if breakpoints is not None:
        bp_arr = np.asarray(breakpoints, dtype=float)

        def bp_fn(a, b):
            return bp_arr[(bp_arr > a) & (bp_arr < b)]

    return WeightSignal(edge_count, omega, eval_fn=fn, breakpoint_fn=bp_fn)


# -- program interpretation (pure reference; the compiled kernel mirrors it) --


def _eval_program(prog: SignalProgram, ts: np.ndarray) -> np.ndarray:
    ts = np.atleast_1d(ts)
    out = np.zeros((ts.size, prog.codes.size))
    for i, code in enumerate(prog.codes):
        prm = prog.params[i]
        if code == FAM_ZERO:
            continue
        if code == FAM_CONST:
            out[:, i] = prm[0]
        elif code == FAM_SINE:
            raw = prm[0] * np.sin(prm[1] * ts + prm[2]) + prm[3]
            out[:, i] = np.maximum(0.0, raw) if prm[4] != 0.0 else raw
        elif code == FAM_SQUARE_SINE:
            raw = (square_wave(ts, prm[0], prm[1]) + prm[2]) * prm[4] * np.sin(prm[3] * ts)
            out[:, i] = np.maximum(0.0, raw) if prm[5] != 0.0 else raw
        elif code == FAM_TABLE:
            out[:, i] = np.interp(ts, prog.table_times, prog.table_values[i])
        else:
            raise SignalError(f"unknown weight family code {code}")
    return out


def _periodic_points(t0, t1, period, offset):
    """All offset + k*period inside (t0, t1)."""
    if period <= 0:
        return np.empty(0)
    k0 = math.floor((t0 - offset) / period) - 1
    k1 = math.ceil((t1 - offset) / period) + 1
    pts = offset + period * np.arange(k0, k1 + 1)
    return pts[(pts > t0) & (pts < t1)]


def _program_breakpoints(prog: SignalProgram, t0: float, t1: float) -> np.ndarray:
    pts = [np.empty(0)]
    for i, code in enumerate(prog.codes):
        prm = prog.params[i]
        if code == FAM_SINE and prm[4] != 0.0 and abs(prm[0]) > 0:
            amp, freq, phase, offset = prm[0], prm[1], prm[2], prm[3]
            if freq != 0 and abs(offset) < abs(amp):
                base = math.asin(-offset / amp)
                for root in (base, math.pi - base):
                    pts.append(_periodic_points(t0, t1, 2 * math.pi / abs(freq),
                                                (root - phase) / freq))
        elif code == FAM_SQUARE_SINE:
            rate, duty, _, sine_freq = prm[0], prm[1], prm[2], prm[3]
            period = 2 * math.pi / rate
            pts.append(_periodic_points(t0, t1, period, 0.0))
            pts.append(_periodic_points(t0, t1, period, period * duty / 100.0))
            if prm[5] != 0.0 and sine_freq != 0:
                pts.append(_periodic_points(t0, t1, math.pi / abs(sine_freq), 0.0))
        elif code == FAM_TABLE:
            tt = prog.table_times
            pts.append(tt[(tt > t0) & (tt < t1)])
    return np.unique(np.concatenate(pts))


def kernel_arrays(signal: WeightSignal):
    """Kernel-ready (program, gate, custom_fn) triple for a signal.

    Program-backed signals return real family arrays and ``custom_fn=None``;
    callable-backed signals return placeholder arrays plus the raw callable,
    which only the pure backend accepts.
    """
    m = signal.edge_count
    if signal.program is not None:
        prog = signal.program
        table_vals = prog.table_values if prog.table_values.size else np.zeros((m, 0))
        prog_arrays = (np.ascontiguousarray(prog.codes, dtype=np.int32),
                       np.ascontiguousarray(prog.params, dtype=float),
                       np.ascontiguousarray(prog.table_times, dtype=float),
                       np.ascontiguousarray(table_vals, dtype=float))
        custom = None
    else:
        prog_arrays = (np.zeros(m, dtype=np.int32), np.zeros((m, 6)),
                       np.empty(0), np.zeros((m, 0)))
        custom = signal._eval_fn
    if signal.gate is not None:
        gate_arrays = (np.ascontiguousarray(signal.gate.start_times, dtype=float),
                       np.ascontiguousarray(signal.gate.masks, dtype=float))
    else:
        gate_arrays = (np.empty(0), np.empty((0, m)))
    return prog_arrays, gate_arrays, custom


# -- excitation certificate ------------------------------------------------


@dataclass(frozen=True)
class PECertificate:
    """Windowed excitation band certified on a finite horizon.

    ``lower``/``upper`` bracket every checked window's per-edge integral of
    the squared weight; both are positive when the certificate exists.
    """

    window: float
    lower: float
    upper: float
    windows_checked: int
    grid_step: float
    horizon: tuple[float, float]
    tree_edges: tuple[int, ...]

    def scaled(self, factor: float) -> "PECertificate":
        """Certificate for the same signal with all weights scaled by ``factor``."""
        return replace(self, lower=self.lower * factor**2,
                       upper=self.upper * factor**2)


def _quadrature_nodes(signal: WeightSignal, t_start, t_end, grid_step, extra=()):
    count = int(math.ceil((t_end - t_start) / grid_step))
    nodes = [np.linspace(t_start, t_end, count + 1)]
    bps = signal.breakpoints_between(t_start, t_end)
    if bps.size:
        nodes.extend([bps, bps - _BP_SHIFT, bps + _BP_SHIFT])
    for arr in extra:
        nodes.append(np.asarray(arr, dtype=float))
    merged = np.unique(np.concatenate(nodes))
    return merged[(merged >= t_start - 1e-12) & (merged <= t_end + 1e-12)]


def verify_pe(signal: WeightSignal, tree_edges, window: float, t_start: float,
              t_end: float, grid_step: float, stride: float | None = None) -> PECertificate:
    """Certify windowed excitation of the tree-edge weights on a horizon.

    Windows of length ``window`` slide at ``stride`` (default a quarter
    window) across ``[t_start, t_end]``. Per edge and window, the integral of
    the squared weight is computed by composite trapezoid with nodes forced
    at signal breakpoints.

    Raises:
        NotPersistentlyExciting: when some tree edge's integral is zero (up
            to quadrature tolerance) on some window; the exception names both.
        SignalError: on malformed window/horizon/grid parameters.
    """
    if window <= 0:
        raise SignalError(f"window must be positive, got {window}")
    if t_end - t_start < window:
        raise SignalError(
            f"horizon [{t_start}, {t_end}] is shorter than the window {window}"
        )
    if grid_step > window / 100.0:
        raise SignalError(
            f"grid step {grid_step} too coarse; need <= window/100 = {window / 100.0}"
        )
    if stride is None:
        stride = window / 4.0
    starts = []
    s = t_start
    while s + window <= t_end + 1e-9:
        starts.append(s)
        s += stride
    starts = np.asarray(starts)
    bounds = np.unique(np.concatenate([starts, starts + window]))

    edges0 = [int(j) - 1 for j in tree_edges]
    nodes = _quadrature_nodes(signal, t_start, t_end, grid_step, extra=[bounds])
    vals = signal.eval_grid(nodes)[:, edges0] ** 2
    seg = 0.5 * (vals[1:] + vals[:-1]) * np.diff(nodes)[:, None]
    cumulative = np.vstack([np.zeros((1, len(edges0))), np.cumsum(seg, axis=0)])

    idx_a = np.searchsorted(nodes, starts - 1e-12)
    idx_b = np.searchsorted(nodes, starts + window - 1e-12)
    integrals = cumulative[idx_b] - cumulative[idx_a]  # (windows, tree edges)

    upper = float(integrals.max())
    lower = float(integrals.min())
    tol = 1e-12 * max(1.0, upper)
    if lower <= tol:
        wi, ei = np.unravel_index(int(np.argmin(integrals)), integrals.shape)
        win = (float(starts[wi]), float(starts[wi] + window))
        raise NotPersistentlyExciting(
            f"not persistently exciting on the tested horizon: edge "
            f"{tree_edges[ei]} integrates to {integrals[wi, ei]:.3e} over "
            f"window [{win[0]:.6g}, {win[1]:.6g}]",
            window=win, edge=int(tree_edges[ei]),
        )
    return PECertificate(window=float(window), lower=lower, upper=upper,
                         windows_checked=len(starts), grid_step=float(grid_step),
                         horizon=(float(t_start), float(t_end)),
                         tree_edges=tuple(int(j) for j in tree_edges))


def norm_bound(signal: WeightSignal, t_start: float, t_end: float,
               grid_step: float) -> float:
    """Largest sampled weight on the horizon; must respect the declared bound.

    Raises:
        SignalError: when a sampled weight exceeds the signal's declared
            bound (a configuration error) or is negative.
    """
    nodes = _quadrature_nodes(signal, t_start, t_end, grid_step)
    vals = signal.eval_grid(nodes)
    worst = float(vals.max(initial=0.0))
    if np.any(vals < -1e-12):
        ti, ei = np.unravel_index(int(np.argmin(vals)), vals.shape)
        raise SignalError(
            f"edge {ei + 1} weight is negative ({vals[ti, ei]:.3e}) at "
            f"t={nodes[ti]:.6g}"
        )
    if worst > signal.omega * (1 + 1e-12) + 1e-12:
        ti, ei = np.unravel_index(int(np.argmax(vals)), vals.shape)
        raise SignalError(
            f"sampled weight {worst:.6g} on edge {ei + 1} at t={nodes[ti]:.6g} "
            f"exceeds the declared bound {signal.omega}"
        )
    return worst
