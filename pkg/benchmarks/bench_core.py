"""Benchmark the compiled kernels against the pure-Python fallback.

Runs the golden switching scenario's hybrid integration and the reduced
propagation on both backends and reports wall times plus the speedup.

Usage::

    python benchmarks/bench_core.py [--repeat N]
"""

from __future__ import annotations

import argparse
import math
import time

import numpy as np

import etconsensus as ec
from etconsensus import _core
from etconsensus.simulate import SwitchingSchedule


def golden_pieces(t_end=60.0):
    top = ec.build_topology(4, [(1, 2), (2, 3), (3, 4), (1, 3), (1, 4), (2, 4)])
    sig = ec.square_sine_weights(6, inactive=(6,))
    sched = SwitchingSchedule.alternating(
        {"G1": (1, 2, 3), "G2": (4, 5, 6)}, ["G1", "G2"], 2 * math.pi, 0.0,
        t_end, window_span=2)
    decomp = ec.decompose(top, tree_hint=[1, 2, 3])
    return top, sig, sched, decomp, t_end


def bench_hybrid(backend: str, repeat: int) -> float:
    top, sig, sched, decomp, t_end = golden_pieces()
    trig = ec.TriggerSpec("dynamic", 0.5, 0.06)
    best = math.inf
    for _ in range(repeat):
        start = time.perf_counter()
        res = ec.simulate(top, sig, trig, 1.0, [1.0, 2.0, 0.3, 0.4], 0.0,
                          t_end, step=0.005, schedule=sched, decomp=decomp,
                          backend=backend)
        best = min(best, time.perf_counter() - start)
    assert len(res.events) > 0
    return best


def bench_ltv(backend: str, repeat: int) -> float:
    top, sig, sched, decomp, t_end = golden_pieces()
    from etconsensus.simulate import schedule_gate

    gated = sig.with_gate(schedule_gate(sched, top))
    best = math.inf
    for _ in range(repeat):
        start = time.perf_counter()
        ec.estimate_overshoot(decomp, gated, 1.0, 1e-3, horizon=t_end,
                              grid_step=0.005,
                              backend=_core.get_backend(backend))
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    backends = _core.available_backends()
    print(f"available backends: {', '.join(backends)}")
    rows = []
    for name, fn in (("hybrid integration", bench_hybrid),
                     ("reduced propagation", bench_ltv)):
        times = {b: fn(b, args.repeat) for b in backends}
        rows.append((name, times))
    for name, times in rows:
        line = f"{name:22s}"
        for b in backends:
            line += f"  {b}: {times[b] * 1e3:9.2f} ms"
        if "compiled" in times and "pure" in times:
            line += f"  speedup: {times['pure'] / times['compiled']:6.1f}x"
        print(line)

    # Cross-check: both backends must produce matching trajectories.
    if len(backends) == 2:
        top, sig, sched, decomp, t_end = golden_pieces(t_end=20.0)
        trig = ec.TriggerSpec("dynamic", 0.5, 0.06)
        runs = {
            b: ec.simulate(top, sig, trig, 1.0, [1.0, 2.0, 0.3, 0.4], 0.0,
                           20.0, step=0.005, schedule=sched, decomp=decomp,
                           backend=b)
            for b in backends
        }
        dev = np.abs(runs["compiled"].states - runs["pure"].states).max()
        print(f"max state deviation compiled vs pure: {dev:.3e}")


if __name__ == "__main__":
    main()
