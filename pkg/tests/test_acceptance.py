"""Acceptance suite: one test per criterion, one printed verdict line each.

Run with ``pytest -v -s tests/test_acceptance.py`` to see the verdict lines
inline. The switching-scenario pipelines are session fixtures shared across
criteria.
"""

import math

import numpy as np
import pytest

import etconsensus as ec
from etconsensus.errors import ScheduleError
from etconsensus.simulate import SwitchingSchedule, schedule_gate
from etconsensus.triggers import EVENT_TOL, TriggerSpec

TARGET_EDGE_NORM = 1e-2
ENVELOPE_SLACK = 1e-6
ZENO_SLACK = 10 * EVENT_TOL
GAP_RESIDUAL_TOL = 1e-12
FORCING_REL_TOL = 1e-10
PE_CONST_TOL = 1e-10
PE_QUAD_TOL = 1e-8
IDENTITY_TOL = 1e-12
ORACLE_EVENT_TOL = 10 * EVENT_TOL
ORACLE_STATE_TOL = 1e-4
MEAN_DRIFT_TOL = 1e-9
RUNTIME_LIMIT = 30.0


def verdict(number: int, name: str, passed: bool, detail: str = ""):
    state = "PASS" if passed else "FAIL"
    print(f"ACCEPTANCE {number:02d} {name}: {state}" + (f" ({detail})" if detail else ""))
    assert passed, f"criterion {number} ({name}) failed: {detail}"


@pytest.fixture(scope="module")
def certified_triangle():
    """Natively certified dynamic run (trigger decay below the rate bound)."""
    top = ec.build_topology(3, [(1, 2), (2, 3), (1, 3)])
    decomp = ec.decompose(top, tree_hint=[1, 2])
    sig = ec.constant_weights([1.0, 1.0, 1.0])
    cert = ec.verify_pe(sig, decomp.tree_edges, 0.5, 0.0, 60.0, 0.004)
    trig = TriggerSpec("dynamic", 0.1, 0.05)
    bnd = ec.certified_bounds(decomp, cert, trig, 0.3, [1.0, -1.0, 0.5],
                              sig.omega, 1.0)
    res = ec.simulate(top, sig, trig, 0.3, [1.0, -1.0, 0.5], 0.0, 60.0,
                      step=0.005, decomp=decomp, bounds=bnd)
    return res, bnd


@pytest.fixture(scope="module")
def contraction_run():
    """Event-free switching run over ten excitation windows."""
    top = ec.build_topology(4, [(1, 2), (2, 3), (3, 4), (1, 3), (1, 4), (2, 4)])
    sig = ec.square_sine_weights(6, inactive=(6,))
    window = 4 * math.pi
    horizon = 10 * window
    sched = SwitchingSchedule.alternating(
        {"G1": (1, 2, 3), "G2": (4, 5, 6)}, ["G1", "G2"], 2 * math.pi, 0.0,
        horizon + 1.0, window_span=2)
    decomp = ec.decompose(top, tree_hint=[1, 2, 3])
    gated = sig.with_gate(schedule_gate(sched, top))
    cert = ec.verify_pe(gated, decomp.tree_edges, window, 0.0, horizon, 0.005)
    rate = ec.rate_lower_bound(1.0, decomp.eigenvalue_min,
                               decomp.eigenvalue_norm, 3, cert.lower,
                               cert.upper, window)
    marks = [j * window for j in range(1, 11)]
    overshoot = ec.estimate_overshoot(decomp, gated, 1.0, rate, horizon, 0.01,
                                      extra_times=marks)
    bounds = ec.certified_bounds(decomp, cert, None, 1.0, [1.0, 2.0, 0.3, 0.4],
                                 sig.omega, overshoot)
    res = ec.simulate(top, sig, None, 1.0, [1.0, 2.0, 0.3, 0.4], 0.0, horizon,
                      step=0.01, schedule=sched, decomp=decomp,
                      extra_times=marks, bounds=bounds)
    return res, bounds, cert, rate, overshoot, marks, window


def test_criterion_01_dynamic_trigger_consensus(dynamic_pipeline):
    res = dynamic_pipeline.result
    bnd = dynamic_pipeline.bounds
    decay = bnd.trigger_decay
    needed = (1.0 / decay) * math.log(
        bnd.edge_ratio * (bnd.transient_coeff + bnd.forcing_coeff)
        / TARGET_EDGE_NORM)
    horizon_ok = res.times[-1] >= needed
    final_norm = float(res.edge_norm[-1])
    runtime = dynamic_pipeline.summary["simulate"]["runtime_seconds"]
    verdict(1, "dynamic-trigger consensus",
            horizon_ok and final_norm <= TARGET_EDGE_NORM
            and runtime < RUNTIME_LIMIT,
            f"|x_e(t_end)|={final_norm:.3e} <= {TARGET_EDGE_NORM}, "
            f"t_end={res.times[-1]:.1f} >= {needed:.1f}, "
            f"runtime={runtime:.2f}s")


def test_criterion_02_envelope_containment(dynamic_pipeline, static_pipeline,
                                           certified_triangle, contraction_run):
    runs = [
        ("switching dynamic", dynamic_pipeline.result, dynamic_pipeline.bounds),
        ("switching static", static_pipeline.result, static_pipeline.bounds),
        ("triangle dynamic", certified_triangle[0], certified_triangle[1]),
        ("continuous", contraction_run[0], contraction_run[1]),
    ]
    details = []
    ok = True
    for name, res, bnd in runs:
        report = ec.check_envelope(res, bnd, slack=ENVELOPE_SLACK)
        ok &= report.passed
        details.append(f"{name}: margin {report.min_margin:.2e}")
    verdict(2, "envelope containment", ok, "; ".join(details))


def test_criterion_03_static_trigger_ball(static_pipeline):
    res = static_pipeline.result
    bnd = static_pipeline.bounds
    t_final = res.times[-1]
    cut = t_final - 0.2 * (t_final - res.times[0])
    tail = res.edge_norm[res.times >= cut]
    limsup = float(tail.max())
    ball = bnd.ball_radius
    late_events = [t for _, t, _ in res.events if t >= cut]
    final_norm = float(res.edge_norm[-1])
    not_converged = final_norm > 1e-3 and len(late_events) > 0
    verdict(3, "static-trigger ball",
            limsup <= ball and not_converged,
            f"limsup(last 20%)={limsup:.4f} <= ball {ball:.1f}; "
            f"final |x_e|={final_norm:.4f}, late events={len(late_events)}")


def test_criterion_04_average_invariance(dynamic_pipeline, static_pipeline,
                                         certified_triangle, contraction_run):
    drifts = {
        "dynamic": dynamic_pipeline.result.mean_drift(),
        "static": static_pipeline.result.mean_drift(),
        "triangle": certified_triangle[0].mean_drift(),
        "continuous": contraction_run[0].mean_drift(),
    }
    worst = max(drifts.values())
    verdict(4, "average invariance", worst < MEAN_DRIFT_TOL,
            f"max drift {worst:.2e} < {MEAN_DRIFT_TOL}")


def test_criterion_05_zeno_exclusion(dynamic_pipeline, static_pipeline,
                                     certified_triangle):
    ok = True
    details = []
    for name, res, bnd in (
        ("dynamic", dynamic_pipeline.result, dynamic_pipeline.bounds),
        ("static", static_pipeline.result, static_pipeline.bounds),
        ("triangle", certified_triangle[0], certified_triangle[1]),
    ):
        report = ec.check_zeno(res, bnd, slack=ZENO_SLACK)
        ok &= report.passed and len(res.events) > 0
        # Residual of the gap equation, reconstructed from the report.
        gap = bnd.min_event_gap
        rhs = bnd.threshold / (
            bnd.gain * bnd.edge_ratio * bnd.weight_bound * bnd.incidence_norm
            * (bnd.transient_coeff + bnd.forcing_coeff))
        residual = abs(gap * math.exp(bnd.trigger_decay * gap) - rhs)
        ok &= residual < GAP_RESIDUAL_TOL
        smallest = min(report.observed.values())
        details.append(f"{name}: gap {smallest:.2e} >= {gap:.2e}, "
                       f"residual {residual:.1e}")
    verdict(5, "zeno exclusion", ok, "; ".join(details))


def test_criterion_06_event_free_contraction(contraction_run):
    res, bounds, cert, rate, overshoot, marks, window = contraction_run
    u0 = res.reduced_norm[0]
    ok = True
    worst_ratio = 0.0
    for j, tj in enumerate(marks, start=1):
        i = int(np.searchsorted(res.times, tj))
        assert abs(res.times[i] - tj) < 1e-9
        lhs = res.reduced_norm[i]
        rhs = overshoot.value * math.exp(-rate * j * window) * u0
        ok &= lhs <= rhs
        worst_ratio = max(worst_ratio, lhs / rhs)
    bracket = 1 - (2 * bounds.gain * bounds.eig_min * cert.lower
                   / (1 + bounds.gain * math.sqrt(3) * bounds.eig_norm
                      * cert.upper) ** 2)
    residual = abs(math.exp(-2 * rate * window) - bracket)
    verdict(6, "event-free contraction",
            ok and residual < IDENTITY_TOL,
            f"worst bound ratio {worst_ratio:.3f} <= 1, "
            f"rate identity residual {residual:.1e}")


def test_criterion_07_oracle_equivalence():
    top = ec.build_topology(3, [(1, 2), (2, 3), (1, 3)])
    sig = ec.sinusoid_weights([(0.5, 2.0, 0.0, 1.0), (0.5, 2.0, 1.0, 1.0),
                               (0.5, 2.0, 2.0, 1.0)])
    x0 = [1.2, -0.4, -0.8]
    trig = TriggerSpec("dynamic", 0.08, 0.1)
    sim = ec.simulate(top, sig, trig, 2.0, x0, 0.0, 0.15, step=1e-3)
    ref = ec.reference_oracle(top, sig, trig, 2.0, x0, 0.0, 0.15, step=1e-3,
                              fine_step=2e-8)
    same_events = len(sim.events) == len(ref.events) > 0
    event_dev = max((abs(t1 - t2) for (_, t1, _), (_, t2, _)
                     in zip(sim.events, ref.events)), default=math.inf)
    state_dev = float(np.abs(sim.states - ref.states).max())

    # Order scaling on the continuous variant: halving the reference step
    # halves the deviation (first-order oracle); halving the integrator step
    # shrinks it consistently with fourth order.
    sim_c = ec.simulate(top, sig, None, 2.0, x0, 0.0, 1.0, step=1e-2)
    oracle_devs = []
    for fine in (2e-5, 1e-5):
        ref_c = ec.reference_oracle(top, sig, None, 2.0, x0, 0.0, 1.0,
                                    step=1e-2, fine_step=fine)
        oracle_devs.append(float(np.abs(sim_c.states - ref_c.states).max()))
    oracle_ratio = oracle_devs[0] / oracle_devs[1]

    ref_fine = ec.reference_oracle(top, sig, None, 2.0, x0, 0.0, 1.0,
                                   step=0.1, fine_step=2e-7)
    rk_devs = []
    for h in (0.1, 0.05):
        sim_h = ec.simulate(top, sig, None, 2.0, x0, 0.0, 1.0, step=h)
        common, si, ri = np.intersect1d(np.round(sim_h.times, 12),
                                        np.round(ref_fine.times, 12),
                                        return_indices=True)
        rk_devs.append(float(np.abs(sim_h.states[si]
                                    - ref_fine.states[ri]).max()))
    rk_ratio = rk_devs[0] / rk_devs[1]

    verdict(7, "oracle equivalence",
            same_events and event_dev < ORACLE_EVENT_TOL
            and state_dev < ORACLE_STATE_TOL
            and 1.6 < oracle_ratio < 2.4 and 10.0 < rk_ratio < 40.0,
            f"{len(sim.events)} events, max event dt {event_dev:.2e} < "
            f"{ORACLE_EVENT_TOL:.0e}, state dev {state_dev:.2e} < "
            f"{ORACLE_STATE_TOL:.0e}, order ratios {oracle_ratio:.2f} (ref), "
            f"{rk_ratio:.1f} (integrator)")


def test_criterion_08_pe_checker_exactness():
    window = 0.7
    const = ec.constant_weights([1.0, 1.0])
    cert = ec.verify_pe(const, [1, 2], window, 0.0, 7.0, 0.005)
    const_ok = (abs(cert.lower - window) < PE_CONST_TOL
                and abs(cert.upper - window) < PE_CONST_TOL)

    # Weight |sin t|: the squared integrand sin^2 integrates to pi/2 over
    # every window of length pi (antiderivative t/2 - sin(2t)/4).
    sig = ec.function_weights(
        1, lambda t: np.array([abs(math.sin(t))]), omega=1.0,
        breakpoints=[k * math.pi for k in range(1, 8)])
    cert_sin = ec.verify_pe(sig, [1], math.pi, 0.0, 7.0, 1e-4)
    sin_ok = (abs(cert_sin.lower - math.pi / 2) < PE_QUAD_TOL
              and abs(cert_sin.upper - math.pi / 2) < PE_QUAD_TOL)
    verdict(8, "excitation checker exactness", const_ok and sin_ok,
            f"constant: [{cert.lower:.12f}, {cert.upper:.12f}] vs {window}; "
            f"|sin|: [{cert_sin.lower:.10f}, {cert_sin.upper:.10f}] vs "
            f"{math.pi / 2:.10f}")


def test_criterion_09_forcing_coefficient_closed_form():
    rng = np.random.default_rng(90210)
    worst = 0.0
    for _ in range(20):
        gain = rng.uniform(0.1, 2.0)
        eig_norm = rng.uniform(0.5, 4.0)
        overshoot = rng.uniform(1.0, 3.0)
        error_gain = rng.uniform(0.1, 2.0)
        mu2 = rng.uniform(0.2, 3.0)
        window = rng.uniform(0.5, 5.0)
        rate = rng.uniform(0.01, 0.8)
        t0 = rng.uniform(0.0, 2.0)
        coeffs = ec.envelope_coefficients(gain, eig_norm, overshoot,
                                          error_gain, mu2, window, rate, 0.0,
                                          t0, 1.0)
        closed = ec.forcing_coefficient_closed_form(gain, eig_norm, overshoot,
                                                    error_gain, mu2, window,
                                                    rate, t0)
        worst = max(worst, abs(coeffs.forcing - closed) / closed)
    verdict(9, "forcing coefficient closed form", worst < FORCING_REL_TOL,
            f"worst relative deviation {worst:.2e} over 20 draws")


def test_criterion_10_switching_hypothesis(union_topology, dynamic_pipeline):
    # Union windows never reaching node 4 must be rejected by validation.
    bad = SwitchingSchedule(
        entries=((0.0, "A"), (2.0, "B"), (4.0, "A"), (6.0, "B")),
        dwell_min=2.0, subgraphs={"A": (1, 2), "B": (2, 4)},
        union_windows=((0.0, 4.0), (4.0, 8.0)))
    rejected = False
    try:
        ec.validate_schedule(bad, union_topology)
    except ScheduleError as exc:
        rejected = "spanning tree" in str(exc)

    # The golden alternation validates, and its pipeline passed stages 1-5
    # style checks (consensus, envelope, invariance, zeno).
    cfg = dynamic_pipeline.config
    sched = cfg.build_schedule()
    cert = ec.validate_schedule(sched, union_topology)
    summary = dynamic_pipeline.summary
    pipeline_ok = summary["passed"]
    verdict(10, "switching hypothesis enforcement",
            rejected and cert.windows_checked > 0 and pipeline_ok,
            f"invalid union rejected; valid alternation: "
            f"{cert.windows_checked} windows, dwell "
            f"{cert.dwell_observed:.3f}; dynamic pipeline passed")
