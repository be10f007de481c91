"""Pure-Python simulation kernels.

Reference implementations of the hot loops; the compiled module in
``_fast.pyx`` mirrors these semantics exactly. Keep the two in lockstep:
every behavioural change here must land there too.

Status codes returned by the kernels: 0 ok, 1 event buffer overflow,
2 non-finite state encountered.
"""

from __future__ import annotations

import math

import numpy as np

_TINY = 1e-15


def _weights_at(t, codes, params, table_times, table_values,
                gate_times, gate_masks, out):
    """Evaluate the per-edge weight program at scalar time ``t`` into ``out``."""
    m = codes.shape[0]
    for i in range(m):
        code = codes[i]
        p = params[i]
        if code == 0:
            out[i] = 0.0
        elif code == 1:
            out[i] = p[0]
        elif code == 2:
            raw = p[0] * math.sin(p[1] * t + p[2]) + p[3]
            out[i] = max(0.0, raw) if p[4] != 0.0 else raw
        elif code == 3:
            u = math.fmod(p[0] * t, 2.0 * math.pi)
            if u < 0.0:
                u += 2.0 * math.pi
            sq = 1.0 if u < 2.0 * math.pi * p[1] / 100.0 else -1.0
            raw = (sq + p[2]) * p[4] * math.sin(p[3] * t)
            out[i] = max(0.0, raw) if p[5] != 0.0 else raw
        else:  # table
            out[i] = np.interp(t, table_times, table_values[i])
    if gate_times.shape[0]:
        seg = int(np.searchsorted(gate_times, t, side="right")) - 1
        if seg < 0:
            seg = 0
        elif seg >= gate_masks.shape[0]:
            seg = gate_masks.shape[0] - 1
        out *= gate_masks[seg]
    return out


def _custom_weights(t, fn, gate_times, gate_masks, out):
    out[:] = fn(t)
    if gate_times.shape[0]:
        seg = int(np.searchsorted(gate_times, t, side="right")) - 1
        seg = min(max(seg, 0), gate_masks.shape[0] - 1)
        out *= gate_masks[seg]
    return out


class _Hybrid:
    """Stepping context for the event-triggered (or continuous) node system."""

    def __init__(self, incidence, codes, params, table_times, table_values,
                 gate_times, gate_masks, gain, custom_fn=None):
        self.d = incidence
        self.codes = codes
        self.params = params
        self.table_times = table_times
        self.table_values = table_values
        self.gate_times = gate_times
        self.gate_masks = gate_masks
        self.gain = gain
        self.custom_fn = custom_fn
        self._w = np.empty(incidence.shape[1])

    def rhs(self, t, source):
        if self.custom_fn is not None:
            w = _custom_weights(t, self.custom_fn, self.gate_times,
                                self.gate_masks, self._w)
        else:
            w = _weights_at(t, self.codes, self.params, self.table_times,
                            self.table_values, self.gate_times,
                            self.gate_masks, self._w)
        return -self.gain * (self.d @ (w * (self.d.T @ source)))

    def step(self, t, x, h, method, xhat, continuous):
        """One explicit step of size ``h`` from (t, x)."""
        if method == 1:
            src = x if continuous else xhat
            return x + h * self.rhs(t, src)
        if continuous:
            k1 = self.rhs(t, x)
            k2 = self.rhs(t + 0.5 * h, x + 0.5 * h * k1)
            k3 = self.rhs(t + 0.5 * h, x + 0.5 * h * k2)
            k4 = self.rhs(t + h, x + h * k3)
        else:
            k1 = self.rhs(t, xhat)
            k2 = self.rhs(t + 0.5 * h, xhat)
            k3 = k2
            k4 = self.rhs(t + h, xhat)
        return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def run_hybrid(x, xhat, t0, record_times, sub_step, method,
               incidence, codes, params, table_times, table_values,
               gate_times, gate_masks, gain, thr_c, thr_decay, continuous,
               eps_event, rec_t, rec_x, rec_xhat,
               ev_agent, ev_time, ev_value, custom_fn=None):
    """Integrate the closed loop, recording at ``record_times`` plus events.

    ``x``/``xhat`` are updated in place; preallocated ``rec_*``/``ev_*``
    buffers are filled. ``custom_fn`` (pure backend only) overrides the
    weight program with an arbitrary ``t -> (m,)`` callable. Returns
    (status, rows_written, events_written).
    """
    sys = _Hybrid(incidence, codes, params, table_times, table_values,
                  gate_times, gate_masks, gain, custom_fn=custom_fn)
    n = x.shape[0]
    max_events = ev_agent.shape[0]
    n_rows = 0
    n_events = 0

    def record(t):
        nonlocal n_rows
        rec_t[n_rows] = t
        rec_x[n_rows] = x
        rec_xhat[n_rows] = xhat
        n_rows += 1

    def any_trigger(t, state):
        thr = thr_c * math.exp(-thr_decay * t)
        return bool(np.any(np.abs(xhat - state) - thr > 0.0))

    t_cur = float(t0)
    record(t_cur)
    for target in record_times:
        target = float(target)
        while t_cur < target - _TINY:
            remaining = target - t_cur
            h = remaining if remaining <= sub_step * (1 + 1e-12) else sub_step
            x_prop = sys.step(t_cur, x, h, method, xhat, continuous)
            t_next = target if h >= remaining * (1 - 1e-14) else t_cur + h
            if not np.all(np.isfinite(x_prop)):
                return 2, n_rows, n_events
            if not continuous and any_trigger(t_next, x_prop):
                if h <= eps_event:
                    tau, x_tau = t_next, x_prop
                else:
                    lo, hi = 0.0, h
                    x_hi = x_prop
                    while hi - lo > eps_event:
                        mid = 0.5 * (lo + hi)
                        x_mid = sys.step(t_cur, x, mid, method, xhat, continuous)
                        if any_trigger(t_cur + mid, x_mid):
                            hi, x_hi = mid, x_mid
                        else:
                            lo = mid
                    tau = target if hi >= remaining * (1 - 1e-14) else t_cur + hi
                    x_tau = x_hi
                thr = thr_c * math.exp(-thr_decay * tau)
                for i in range(n):
                    if abs(xhat[i] - x_tau[i]) - thr > 0.0:
                        if n_events >= max_events:
                            return 1, n_rows, n_events
                        xhat[i] = x_tau[i]
                        ev_agent[n_events] = i + 1
                        ev_time[n_events] = tau
                        ev_value[n_events] = x_tau[i]
                        n_events += 1
                t_cur = tau
                x[:] = x_tau
                record(t_cur)
                continue
            t_cur = t_next
            x[:] = x_prop
        if n_rows == 0 or rec_t[n_rows - 1] != target:
            record(target)
    return 0, n_rows, n_events


def run_ltv(phi, t0, record_times, sub_step, eigenvalues, mixing,
            codes, params, table_times, table_values, gate_times, gate_masks,
            gain, rec_phi, custom_fn=None):
    """Propagate the reduced linear time-varying system with classical RK4.

    ``phi`` (p x p, updated in place) solves ``phi' = -gain * diag(eig) *
    mixing^T diag(w(t)) mixing * phi``; snapshots land in ``rec_phi`` at each
    record time. Returns (status, rows_written).
    """
    w = np.empty(mixing.shape[0])
    lam = eigenvalues

    def rhs(t, p_mat):
        if custom_fn is not None:
            _custom_weights(t, custom_fn, gate_times, gate_masks, w)
        else:
            _weights_at(t, codes, params, table_times, table_values,
                        gate_times, gate_masks, w)
        return -gain * (lam[:, None] * (mixing.T @ (w[:, None] * (mixing @ p_mat))))

    n_rows = 0
    t_cur = float(t0)
    rec_phi[n_rows] = phi
    n_rows += 1
    for target in record_times:
        target = float(target)
        while t_cur < target - _TINY:
            remaining = target - t_cur
            h = remaining if remaining <= sub_step * (1 + 1e-12) else sub_step
            k1 = rhs(t_cur, phi)
            k2 = rhs(t_cur + 0.5 * h, phi + 0.5 * h * k1)
            k3 = rhs(t_cur + 0.5 * h, phi + 0.5 * h * k2)
            k4 = rhs(t_cur + h, phi + h * k3)
            phi += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(phi)):
                return 2, n_rows
            t_cur = target if h >= remaining * (1 - 1e-14) else t_cur + h
        rec_phi[n_rows] = phi
        n_rows += 1
    return 0, n_rows
