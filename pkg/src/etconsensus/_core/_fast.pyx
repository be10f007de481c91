# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled simulation kernels.

Mirrors ``_pure.py`` exactly; any behavioural change must land in both.
Status codes: 0 ok, 1 event buffer overflow, 2 non-finite state.
"""

from libc.math cimport sin, exp, fmod, fabs, isfinite, pi

import numpy as np


cdef double _TINY = 1e-15


cdef inline int _bisect_right(const double[::1] arr, double t) noexcept:
    cdef int lo = 0, hi = arr.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if t < arr[mid]:
            hi = mid
        else:
            lo = mid + 1
    return lo


cdef inline double _interp(double t, const double[::1] xs, const double[::1] ys) noexcept:
    cdef int k = xs.shape[0]
    if t <= xs[0]:
        return ys[0]
    if t >= xs[k - 1]:
        return ys[k - 1]
    cdef int i = _bisect_right(xs, t) - 1
    if i >= k - 1:
        return ys[k - 1]
    cdef double frac = (t - xs[i]) / (xs[i + 1] - xs[i])
    return ys[i] + frac * (ys[i + 1] - ys[i])


cdef void _weights_at(double t, const int[::1] codes, const double[:, ::1] params,
                      const double[::1] table_times, const double[:, ::1] table_values,
                      const double[::1] gate_times, const double[:, ::1] gate_masks,
                      double[::1] out) noexcept:
    cdef int m = codes.shape[0]
    cdef int i, code, seg
    cdef double raw, u
    for i in range(m):
        code = codes[i]
        if code == 0:
            out[i] = 0.0
        elif code == 1:
            out[i] = params[i, 0]
        elif code == 2:
            raw = params[i, 0] * sin(params[i, 1] * t + params[i, 2]) + params[i, 3]
            out[i] = max(0.0, raw) if params[i, 4] != 0.0 else raw
        elif code == 3:
            u = fmod(params[i, 0] * t, 2.0 * pi)
            if u < 0.0:
                u += 2.0 * pi
            raw = ((1.0 if u < 2.0 * pi * params[i, 1] / 100.0 else -1.0)
                   + params[i, 2]) * params[i, 4] * sin(params[i, 3] * t)
            out[i] = max(0.0, raw) if params[i, 5] != 0.0 else raw
        else:
            out[i] = _interp(t, table_times, table_values[i])
    if gate_times.shape[0]:
        seg = _bisect_right(gate_times, t) - 1
        if seg < 0:
            seg = 0
        elif seg >= gate_masks.shape[0]:
            seg = gate_masks.shape[0] - 1
        for i in range(m):
            out[i] *= gate_masks[seg, i]


cdef void _rhs(double t, const double[:, ::1] d, double gain, const double[::1] source,
               const int[::1] codes, const double[:, ::1] params,
               const double[::1] table_times, const double[:, ::1] table_values,
               const double[::1] gate_times, const double[:, ::1] gate_masks,
               double[::1] w, double[::1] edge_tmp, double[::1] out) noexcept:
    cdef int n = d.shape[0], m = d.shape[1]
    cdef int i, j
    cdef double acc
    _weights_at(t, codes, params, table_times, table_values,
                gate_times, gate_masks, w)
    for j in range(m):
        acc = 0.0
        for i in range(n):
            acc += d[i, j] * source[i]
        edge_tmp[j] = w[j] * acc
    for i in range(n):
        acc = 0.0
        for j in range(m):
            acc += d[i, j] * edge_tmp[j]
        out[i] = -gain * acc


cdef void _step(double t, const double[::1] x, double h, int method,
                const double[::1] xhat, bint continuous,
                const double[:, ::1] d, double gain,
                const int[::1] codes, const double[:, ::1] params,
                const double[::1] table_times, const double[:, ::1] table_values,
                const double[::1] gate_times, const double[:, ::1] gate_masks,
                double[::1] w, double[::1] edge_tmp,
                double[::1] k1, double[::1] k2, double[::1] k3, double[::1] k4,
                double[::1] stage, double[::1] x_out) noexcept:
    cdef int n = x.shape[0]
    cdef int i
    if method == 1:
        _rhs(t, d, gain, x if continuous else xhat, codes, params,
             table_times, table_values, gate_times, gate_masks,
             w, edge_tmp, k1)
        for i in range(n):
            x_out[i] = x[i] + h * k1[i]
        return
    if continuous:
        _rhs(t, d, gain, x, codes, params, table_times, table_values,
             gate_times, gate_masks, w, edge_tmp, k1)
        for i in range(n):
            stage[i] = x[i] + 0.5 * h * k1[i]
        _rhs(t + 0.5 * h, d, gain, stage, codes, params, table_times,
             table_values, gate_times, gate_masks, w, edge_tmp, k2)
        for i in range(n):
            stage[i] = x[i] + 0.5 * h * k2[i]
        _rhs(t + 0.5 * h, d, gain, stage, codes, params, table_times,
             table_values, gate_times, gate_masks, w, edge_tmp, k3)
        for i in range(n):
            stage[i] = x[i] + h * k3[i]
        _rhs(t + h, d, gain, stage, codes, params, table_times,
             table_values, gate_times, gate_masks, w, edge_tmp, k4)
    else:
        _rhs(t, d, gain, xhat, codes, params, table_times, table_values,
             gate_times, gate_masks, w, edge_tmp, k1)
        _rhs(t + 0.5 * h, d, gain, xhat, codes, params, table_times,
             table_values, gate_times, gate_masks, w, edge_tmp, k2)
        for i in range(n):
            k3[i] = k2[i]
        _rhs(t + h, d, gain, xhat, codes, params, table_times,
             table_values, gate_times, gate_masks, w, edge_tmp, k4)
    for i in range(n):
        x_out[i] = x[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


def run_hybrid(double[::1] x, double[::1] xhat, double t0,
               const double[::1] record_times, double sub_step, int method,
               const double[:, ::1] incidence, const int[::1] codes, const double[:, ::1] params,
               const double[::1] table_times, const double[:, ::1] table_values,
               const double[::1] gate_times, const double[:, ::1] gate_masks,
               double gain, double thr_c, double thr_decay, bint continuous,
               double eps_event, double[::1] rec_t, double[:, ::1] rec_x,
               double[:, ::1] rec_xhat, long long[::1] ev_agent,
               double[::1] ev_time, double[::1] ev_value):
    """See ``_pure.run_hybrid``; identical semantics, compiled."""
    cdef int n = x.shape[0], m = incidence.shape[1]
    cdef int max_events = ev_agent.shape[0]
    cdef int n_rows = 0, n_events = 0
    cdef int ti, i, fired_any
    cdef double t_cur, target, remaining, h, t_next, tau, thr
    cdef double lo, hi, mid

    buf = np.empty((10, max(n, m)))
    cdef double[:, ::1] work = buf
    cdef double[::1] w = work[0, :m]
    cdef double[::1] edge_tmp = work[1, :m]
    cdef double[::1] k1 = work[2, :n]
    cdef double[::1] k2 = work[3, :n]
    cdef double[::1] k3 = work[4, :n]
    cdef double[::1] k4 = work[5, :n]
    cdef double[::1] stage = work[6, :n]
    cdef double[::1] x_prop = work[7, :n]
    cdef double[::1] x_mid = work[8, :n]
    cdef double[::1] x_hi = work[9, :n]

    t_cur = t0
    rec_t[n_rows] = t_cur
    for i in range(n):
        rec_x[n_rows, i] = x[i]
        rec_xhat[n_rows, i] = xhat[i]
    n_rows += 1

    for ti in range(record_times.shape[0]):
        target = record_times[ti]
        while t_cur < target - _TINY:
            remaining = target - t_cur
            h = remaining if remaining <= sub_step * (1 + 1e-12) else sub_step
            _step(t_cur, x, h, method, xhat, continuous, incidence, gain,
                  codes, params, table_times, table_values, gate_times,
                  gate_masks, w, edge_tmp, k1, k2, k3, k4, stage, x_prop)
            t_next = target if h >= remaining * (1 - 1e-14) else t_cur + h
            for i in range(n):
                if not isfinite(x_prop[i]):
                    return 2, n_rows, n_events
            fired_any = 0
            if not continuous:
                thr = thr_c * exp(-thr_decay * t_next)
                for i in range(n):
                    if fabs(xhat[i] - x_prop[i]) - thr > 0.0:
                        fired_any = 1
                        break
            if fired_any:
                if h <= eps_event:
                    tau = t_next
                    for i in range(n):
                        x_hi[i] = x_prop[i]
                else:
                    lo = 0.0
                    hi = h
                    for i in range(n):
                        x_hi[i] = x_prop[i]
                    while hi - lo > eps_event:
                        mid = 0.5 * (lo + hi)
                        _step(t_cur, x, mid, method, xhat, continuous,
                              incidence, gain, codes, params, table_times,
                              table_values, gate_times, gate_masks, w,
                              edge_tmp, k1, k2, k3, k4, stage, x_mid)
                        thr = thr_c * exp(-thr_decay * (t_cur + mid))
                        fired_any = 0
                        for i in range(n):
                            if fabs(xhat[i] - x_mid[i]) - thr > 0.0:
                                fired_any = 1
                                break
                        if fired_any:
                            hi = mid
                            for i in range(n):
                                x_hi[i] = x_mid[i]
                        else:
                            lo = mid
                    tau = target if hi >= remaining * (1 - 1e-14) else t_cur + hi
                thr = thr_c * exp(-thr_decay * tau)
                for i in range(n):
                    if fabs(xhat[i] - x_hi[i]) - thr > 0.0:
                        if n_events >= max_events:
                            return 1, n_rows, n_events
                        xhat[i] = x_hi[i]
                        ev_agent[n_events] = i + 1
                        ev_time[n_events] = tau
                        ev_value[n_events] = x_hi[i]
                        n_events += 1
                t_cur = tau
                for i in range(n):
                    x[i] = x_hi[i]
                rec_t[n_rows] = t_cur
                for i in range(n):
                    rec_x[n_rows, i] = x[i]
                    rec_xhat[n_rows, i] = xhat[i]
                n_rows += 1
                continue
            t_cur = t_next
            for i in range(n):
                x[i] = x_prop[i]
        if rec_t[n_rows - 1] != target:
            rec_t[n_rows] = target
            for i in range(n):
                rec_x[n_rows, i] = x[i]
                rec_xhat[n_rows, i] = xhat[i]
            n_rows += 1
    return 0, n_rows, n_events


cdef void _ltv_rhs(double t, const double[:, ::1] phi, double gain,
                   const double[::1] lam, const double[:, ::1] mixing,
                   const int[::1] codes, const double[:, ::1] params,
                   const double[::1] table_times, const double[:, ::1] table_values,
                   const double[::1] gate_times, const double[:, ::1] gate_masks,
                   double[::1] w, double[:, ::1] mix_tmp,
                   double[:, ::1] out) noexcept:
    cdef int p = phi.shape[0], m = mixing.shape[0]
    cdef int i, j, r
    cdef double acc
    _weights_at(t, codes, params, table_times, table_values,
                gate_times, gate_masks, w)
    # mix_tmp = diag(w) @ mixing @ phi  (m x p)
    for j in range(m):
        for r in range(p):
            acc = 0.0
            for i in range(p):
                acc += mixing[j, i] * phi[i, r]
            mix_tmp[j, r] = w[j] * acc
    # out = -gain * diag(lam) @ mixing^T @ mix_tmp
    for i in range(p):
        for r in range(p):
            acc = 0.0
            for j in range(m):
                acc += mixing[j, i] * mix_tmp[j, r]
            out[i, r] = -gain * lam[i] * acc


def run_ltv(double[:, ::1] phi, double t0, const double[::1] record_times,
            double sub_step, const double[::1] eigenvalues, const double[:, ::1] mixing,
            const int[::1] codes, const double[:, ::1] params,
            const double[::1] table_times, const double[:, ::1] table_values,
            const double[::1] gate_times, const double[:, ::1] gate_masks,
            double gain, double[:, :, ::1] rec_phi):
    """See ``_pure.run_ltv``; identical semantics, compiled."""
    cdef int p = phi.shape[0], m = mixing.shape[0]
    cdef int n_rows = 0
    cdef int ti, i, r
    cdef double t_cur, target, remaining, h

    k1b = np.empty((p, p)); k2b = np.empty((p, p))
    k3b = np.empty((p, p)); k4b = np.empty((p, p))
    stageb = np.empty((p, p)); mtmp = np.empty((m, p)); wb = np.empty(m)
    cdef double[:, ::1] k1 = k1b, k2 = k2b, k3 = k3b, k4 = k4b
    cdef double[:, ::1] stage = stageb, mix_tmp = mtmp
    cdef double[::1] w = wb

    t_cur = t0
    for i in range(p):
        for r in range(p):
            rec_phi[n_rows, i, r] = phi[i, r]
    n_rows += 1
    for ti in range(record_times.shape[0]):
        target = record_times[ti]
        while t_cur < target - _TINY:
            remaining = target - t_cur
            h = remaining if remaining <= sub_step * (1 + 1e-12) else sub_step
            _ltv_rhs(t_cur, phi, gain, eigenvalues, mixing, codes, params,
                     table_times, table_values, gate_times, gate_masks,
                     w, mix_tmp, k1)
            for i in range(p):
                for r in range(p):
                    stage[i, r] = phi[i, r] + 0.5 * h * k1[i, r]
            _ltv_rhs(t_cur + 0.5 * h, stage, gain, eigenvalues, mixing, codes,
                     params, table_times, table_values, gate_times, gate_masks,
                     w, mix_tmp, k2)
            for i in range(p):
                for r in range(p):
                    stage[i, r] = phi[i, r] + 0.5 * h * k2[i, r]
            _ltv_rhs(t_cur + 0.5 * h, stage, gain, eigenvalues, mixing, codes,
                     params, table_times, table_values, gate_times, gate_masks,
                     w, mix_tmp, k3)
            for i in range(p):
                for r in range(p):
                    stage[i, r] = phi[i, r] + h * k3[i, r]
            _ltv_rhs(t_cur + h, stage, gain, eigenvalues, mixing, codes,
                     params, table_times, table_values, gate_times, gate_masks,
                     w, mix_tmp, k4)
            for i in range(p):
                for r in range(p):
                    phi[i, r] += (h / 6.0) * (k1[i, r] + 2.0 * k2[i, r]
                                              + 2.0 * k3[i, r] + k4[i, r])
                    if not isfinite(phi[i, r]):
                        return 2, n_rows
            t_cur = target if h >= remaining * (1 - 1e-14) else t_cur + h
        for i in range(p):
            for r in range(p):
                rec_phi[n_rows, i, r] = phi[i, r]
        n_rows += 1
    return 0, n_rows
