"""Scenario pipeline: decompose, certify excitation, compute constants,
simulate, and check the run against its certificates.

Every stage writes a deterministic artifact; numeric output uses 17
significant digits so files round-trip doubles exactly and identical
configurations produce identical bytes.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

from . import _core
from .bounds import (
    ConvergenceBounds,
    certified_bounds,
    estimate_overshoot,
    rate_lower_bound,
)
from .config import ScenarioConfig, emit_config
from .errors import EtConsensusError
from .graphs import decompose
from .signals import norm_bound, verify_pe
from .simulate import (
    SimResult,
    check_envelope,
    check_zeno,
    schedule_gate,
    simulate,
    validate_schedule,
)

STAGES = ("config", "decompose", "excitation", "constants", "simulate",
          "envelope", "zeno")
STAGE_EXIT_CODES = {name: code for code, name in enumerate(STAGES, start=2)}


class StageFailure(EtConsensusError):
    """A pipeline stage failed; carries the stage name for exit codes."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = STAGE_EXIT_CODES.get(stage, 1)


def _fmt(value) -> str:
    if value is None:
        return ""
    return f"{value:.17g}"


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _stable_summary(summary: dict) -> dict:
    """Summary with volatile fields (wall-clock timing) stripped, so the
    written artifact is byte-stable for identical configurations."""
    doc = json.loads(json.dumps(summary))
    doc.get("simulate", {}).pop("runtime_seconds", None)
    return doc


def write_trajectory_csv(result: SimResult, path: Path):
    """Aligned series: time, states, broadcasts, norms, optional envelope."""
    n = result.node_count
    header = (["t"] + [f"x_{i + 1}" for i in range(n)]
              + [f"xhat_{i + 1}" for i in range(n)]
              + ["edge_norm", "edge_norm_active", "reduced_norm", "envelope"])
    lines = [",".join(header)]
    env = result.envelope
    for i, t in enumerate(result.times):
        row = [_fmt(t)]
        row += [_fmt(v) for v in result.states[i]]
        row += [_fmt(v) for v in result.broadcasts[i]]
        row += [_fmt(result.edge_norm[i]), _fmt(result.edge_norm_active[i]),
                _fmt(result.reduced_norm[i]),
                _fmt(env[i]) if env is not None else ""]
        lines.append(",".join(row))
    _write(path, "\n".join(lines) + "\n")


def write_events_csv(result: SimResult, path: Path):
    kind = result.trigger.kind if result.trigger is not None else "none"
    lines = ["agent,time,broadcast_value,trigger_kind"]
    for agent, t, value in result.events:
        lines.append(f"{agent},{_fmt(t)},{_fmt(value)},{kind}")
    _write(path, "\n".join(lines) + "\n")


def write_events_json(result: SimResult, path: Path):
    kind = result.trigger.kind if result.trigger is not None else "none"
    _write(path, _json_text({
        "trigger_kind": kind,
        "events": [
            {"agent": agent, "time": t, "broadcast_value": value}
            for agent, t, value in result.events
        ],
    }))


def emit_plot_data(result: SimResult, bounds: ConvergenceBounds | None,
                   directory: Path) -> list[Path]:
    """Write plotting-ready series and event markers; returns the paths.

    ``series.csv`` aligns time with the edge-state norms, reduced norm, the
    certified envelope (when available), and the per-agent states;
    ``event_markers.csv`` lists one row per broadcast event. Byte-stable for
    identical runs.
    """
    directory = Path(directory)
    env = bounds.envelope_at(result.times) if bounds is not None else result.envelope
    n = result.node_count
    header = (["t", "edge_norm", "edge_norm_active", "reduced_norm", "envelope"]
              + [f"x_{i + 1}" for i in range(n)])
    lines = [",".join(header)]
    for i, t in enumerate(result.times):
        row = [_fmt(t), _fmt(result.edge_norm[i]), _fmt(result.edge_norm_active[i]),
               _fmt(result.reduced_norm[i]),
               _fmt(env[i]) if env is not None else ""]
        row += [_fmt(v) for v in result.states[i]]
        lines.append(",".join(row))
    series = directory / "series.csv"
    _write(series, "\n".join(lines) + "\n")

    markers = directory / "event_markers.csv"
    mlines = ["time,agent,broadcast_value"]
    for agent, t, value in result.events:
        mlines.append(f"{_fmt(t)},{agent},{_fmt(value)}")
    _write(markers, "\n".join(mlines) + "\n")
    return [series, markers]


@dataclass
class PipelineResult:
    """Everything a pipeline run produced, plus the summary document."""

    config: ScenarioConfig
    summary: dict
    result: SimResult | None
    bounds: ConvergenceBounds | None
    artifacts: list[Path]


def run_pipeline(config: ScenarioConfig, out_dir: Path | str | None = None,
                 write_trajectories: bool = True,
                 backend: str | None = None) -> PipelineResult:
    """Run decompose -> excitation -> constants -> simulate -> checks.

    Artifacts land in ``out_dir`` when given. Any stage failure raises
    :class:`StageFailure` naming the stage; partial artifacts written before
    the failure are left in place and flagged in the exception message.
    """
    if out_dir is None and config.outputs.directory is not None:
        out_dir = config.outputs.directory
    out = Path(out_dir) if out_dir is not None else None
    artifacts: list[Path] = []
    summary: dict = {"name": config.name, "stages": {}, "backend": backend or _core.BACKEND}

    def emit(name: str, text: str):
        if out is not None:
            path = out / name
            _write(path, text)
            artifacts.append(path)

    def stage(name: str):
        summary["stages"][name] = "ok"

    def fail(name: str, exc: Exception):
        summary["stages"][name] = f"failed: {exc}"
        if out is not None:
            emit("summary.json", _json_text(_stable_summary(summary)))
        raise StageFailure(name, exc) from exc

    # config ---------------------------------------------------------------
    try:
        topology = config.build_topology()
        signal = config.build_signal()
        trigger = config.build_trigger()
        schedule = config.build_schedule()
        summary["defaults_applied"] = list(config.applied_defaults)
        emit("config.json", emit_config(config))
        stage("config")
    except EtConsensusError as exc:
        fail("config", exc)

    # decompose --------------------------------------------------------------
    try:
        if schedule is not None:
            validate_schedule(schedule, topology)
        hint = list(config.topology.tree_hint) if config.topology.tree_hint else None
        decomp = decompose(topology, tree_hint=hint)
        summary["decomposition"] = {
            "tree_edges": list(decomp.tree_edges),
            "cycle_edges": list(decomp.cycle_edges),
            "eigenvalues": [float(v) for v in decomp.eigenvalues],
            "edge_state_ratio": decomp.edge_state_ratio,
            "incidence_norm": topology.incidence_norm(),
        }
        emit("decomposition.json", _json_text(summary["decomposition"]))
        stage("decompose")
    except EtConsensusError as exc:
        fail("decompose", exc)

    # excitation -------------------------------------------------------------
    try:
        gated = signal
        if schedule is not None:
            gated = signal.with_gate(schedule_gate(schedule, topology))
        excfg = config.excitation
        cert = verify_pe(gated, decomp.tree_edges, excfg.window, config.t0,
                         config.t_end, excfg.grid_step, stride=excfg.stride)
        observed_bound = norm_bound(gated, config.t0, config.t_end,
                                    excfg.grid_step)
        summary["excitation"] = {
            "window": cert.window, "lower": cert.lower, "upper": cert.upper,
            "windows_checked": cert.windows_checked,
            "grid_step": cert.grid_step, "horizon": list(cert.horizon),
            "tree_edges": list(cert.tree_edges),
            "weight_bound_declared": signal.omega,
            "weight_bound_observed": observed_bound,
        }
        emit("pe_certificate.json", _json_text(summary["excitation"]))
        stage("excitation")
    except EtConsensusError as exc:
        fail("excitation", exc)

    # constants ----------------------------------------------------------------
    try:
        ovcfg = config.overshoot
        if ovcfg.mode == "given":
            overshoot = float(ovcfg.value)
        else:
            rate_probe = rate_lower_bound(config.gain, decomp.eigenvalue_min,
                                          decomp.eigenvalue_norm,
                                          decomp.tree_edge_count, cert.lower,
                                          cert.upper, cert.window)
            kernel = _core.get_backend(backend) if backend else None
            overshoot = estimate_overshoot(decomp, gated, config.gain,
                                           rate_probe, ovcfg.horizon,
                                           ovcfg.grid_step,
                                           t_initial=config.t0,
                                           backend=kernel)
        bounds = certified_bounds(decomp, cert, trigger, config.gain,
                                  config.x0, signal.omega, overshoot,
                                  t_initial=config.t0,
                                  cap_decay=config.checks.cap_decay,
                                  cap_fraction=config.checks.cap_fraction)
        summary["constants"] = bounds.to_dict()
        emit("constants.json", _json_text(bounds.to_dict()))
        stage("constants")
    except EtConsensusError as exc:
        fail("constants", exc)

    # simulate -----------------------------------------------------------------
    try:
        started = time.perf_counter()
        result = simulate(topology, signal, trigger, config.gain, config.x0,
                          config.t0, config.t_end, step=config.step,
                          schedule=schedule, decomp=decomp,
                          pe_window=config.excitation.window, bounds=bounds,
                          backend=backend)
        elapsed = time.perf_counter() - started
        summary["simulate"] = {
            "samples": int(result.times.size),
            "events": len(result.events),
            "step": result.step,
            "backend": result.backend,
            "runtime_seconds": elapsed,
            "final_edge_norm": float(result.edge_norm[-1]),
            "mean_drift": result.mean_drift(),
            "min_inter_event": {str(k): v for k, v in
                                sorted(result.min_inter_event().items())},
        }
        if write_trajectories and out is not None:
            write_trajectory_csv(result, out / "trajectory.csv")
            write_events_csv(result, out / "events.csv")
            write_events_json(result, out / "events.json")
            artifacts += [out / "trajectory.csv", out / "events.csv",
                          out / "events.json"]
            artifacts += emit_plot_data(result, bounds, out)
        stage("simulate")
    except EtConsensusError as exc:
        fail("simulate", exc)

    # envelope -------------------------------------------------------------------
    try:
        env_report = check_envelope(result, bounds,
                                    slack=config.checks.envelope_slack)
        summary["envelope"] = {
            "passed": env_report.passed,
            "min_margin": env_report.min_margin,
            "violations": len(env_report.violations),
            "slack": env_report.slack,
        }
        if not env_report.passed:
            fail("envelope", EtConsensusError(str(env_report)))
        stage("envelope")
    except StageFailure:
        raise
    except EtConsensusError as exc:
        fail("envelope", exc)

    # For ball-convergence runs (zero certified decay with a live trigger),
    # report the tail of the edge norm against the certified ball radius.
    if trigger is not None and bounds.decay_certified == 0.0:
        t_cut = result.times[-1] - 0.2 * (result.times[-1] - result.times[0])
        tail = result.edge_norm[result.times >= t_cut]
        summary["ball"] = {
            "radius": bounds.ball_radius,
            "tail_limsup": float(tail.max()),
            "within": bool(tail.max() <= bounds.ball_radius),
            "tail_start": float(t_cut),
        }

    # zeno ------------------------------------------------------------------------
    try:
        zeno_report = check_zeno(result, bounds, slack=config.checks.zeno_slack)
        summary["zeno"] = {
            "passed": zeno_report.passed,
            "gap_bound": zeno_report.gap_bound,
            "observed": {str(k): v for k, v in sorted(zeno_report.observed.items())},
            "flagged": list(zeno_report.flagged),
            "slack": zeno_report.slack,
        }
        if not zeno_report.passed:
            fail("zeno", EtConsensusError(str(zeno_report)))
        stage("zeno")
    except StageFailure:
        raise
    except EtConsensusError as exc:
        fail("zeno", exc)

    summary["passed"] = all(v == "ok" for v in summary["stages"].values())
    emit("summary.json", _json_text(_stable_summary(summary)))
    return PipelineResult(config=config, summary=summary, result=result,
                          bounds=bounds, artifacts=artifacts)


def stage_report(config: ScenarioConfig, upto: str,
                 out_dir: Path | str | None = None) -> dict:
    """Run the pipeline only through ``upto`` and return that stage's report.

    Used by the decompose/pe-check/constants subcommands.
    """
    out = Path(out_dir) if out_dir is not None else None
    topology = config.build_topology()
    signal = config.build_signal()
    schedule = config.build_schedule()
    if schedule is not None:
        validate_schedule(schedule, topology)
    hint = list(config.topology.tree_hint) if config.topology.tree_hint else None
    decomp = decompose(topology, tree_hint=hint)
    report = {
        "tree_edges": list(decomp.tree_edges),
        "cycle_edges": list(decomp.cycle_edges),
        "eigenvalues": [float(v) for v in decomp.eigenvalues],
        "edge_state_ratio": decomp.edge_state_ratio,
        "incidence_norm": topology.incidence_norm(),
    }
    if upto == "decompose":
        if out is not None:
            _write(out / "decomposition.json", _json_text(report))
        return report

    gated = signal
    if schedule is not None:
        gated = signal.with_gate(schedule_gate(schedule, topology))
    excfg = config.excitation
    cert = verify_pe(gated, decomp.tree_edges, excfg.window, config.t0,
                     config.t_end, excfg.grid_step, stride=excfg.stride)
    observed = norm_bound(gated, config.t0, config.t_end, excfg.grid_step)
    pe_report = {
        "window": cert.window, "lower": cert.lower, "upper": cert.upper,
        "windows_checked": cert.windows_checked, "grid_step": cert.grid_step,
        "horizon": list(cert.horizon), "tree_edges": list(cert.tree_edges),
        "weight_bound_declared": signal.omega,
        "weight_bound_observed": observed,
    }
    if upto == "excitation":
        if out is not None:
            _write(out / "pe_certificate.json", _json_text(pe_report))
        return pe_report

    ovcfg = config.overshoot
    if ovcfg.mode == "given":
        overshoot = float(ovcfg.value)
    else:
        rate_probe = rate_lower_bound(config.gain, decomp.eigenvalue_min,
                                      decomp.eigenvalue_norm,
                                      decomp.tree_edge_count, cert.lower,
                                      cert.upper, cert.window)
        overshoot = estimate_overshoot(decomp, gated, config.gain, rate_probe,
                                       ovcfg.horizon, ovcfg.grid_step,
                                       t_initial=config.t0)
    bounds = certified_bounds(decomp, cert, config.build_trigger(), config.gain,
                              config.x0, signal.omega, overshoot,
                              t_initial=config.t0,
                              cap_decay=config.checks.cap_decay,
                              cap_fraction=config.checks.cap_fraction)
    report = bounds.to_dict()
    if out is not None:
        _write(out / "constants.json", _json_text(report))
    return report
