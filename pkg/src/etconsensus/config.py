"""Scenario configuration: parsing, validation, emission, and presets.

Configurations are JSON documents. Parsing applies defaults and records
which fields were defaulted; emission writes the resolved document with
sorted keys and full float precision, so ``parse(emit(cfg)) == cfg`` holds
and artifacts stay byte-stable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

from .errors import ConfigError
from .graphs import Topology, build_topology
from .signals import (
    WeightSignal,
    constant_weights,
    sinusoid_weights,
    square_sine_weights,
    table_weights,
)
from .simulate import SwitchingSchedule
from .triggers import TriggerSpec

_WEIGHT_KINDS = ("constant", "sinusoid", "square_sine", "table")


@dataclass(frozen=True)
class TopologyConfig:
    nodes: int
    edges: tuple[tuple[int, int], ...]
    tree_hint: tuple[int, ...] | None = None


@dataclass(frozen=True)
class WeightsConfig:
    kind: str
    params: dict


@dataclass(frozen=True)
class TriggerConfig:
    kind: str
    threshold: float
    decay: float = 0.0


@dataclass(frozen=True)
class ScheduleConfig:
    dwell_min: float
    subgraphs: dict
    entries: tuple[tuple[float, str], ...]
    union_windows: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class ExcitationConfig:
    window: float
    grid_step: float
    stride: float | None = None


@dataclass(frozen=True)
class OvershootConfig:
    mode: str  # "estimate" | "given"
    value: float | None = None
    horizon: float | None = None
    grid_step: float | None = None


@dataclass(frozen=True)
class ChecksConfig:
    envelope_slack: float = 1e-6
    zeno_slack: float = 1e-8
    cap_decay: bool = True
    cap_fraction: float = 0.5


@dataclass(frozen=True)
class OutputsConfig:
    directory: str | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    topology: TopologyConfig
    weights: WeightsConfig
    trigger: TriggerConfig | None
    gain: float
    x0: tuple[float, ...]
    t0: float
    t_end: float
    excitation: ExcitationConfig
    overshoot: OvershootConfig
    checks: ChecksConfig
    step: float | None = None
    schedule: ScheduleConfig | None = None
    outputs: OutputsConfig = OutputsConfig()
    precision: int = 17
    notes: str = ""
    applied_defaults: tuple[str, ...] = field(default=(), compare=False)

    # -- builders ---------------------------------------------------------

    def build_topology(self) -> Topology:
        return build_topology(self.topology.nodes, self.topology.edges)

    def build_signal(self) -> WeightSignal:
        kind, prm = self.weights.kind, self.weights.params
        m = len(self.topology.edges)
        if kind == "constant":
            vals = prm["values"]
            if len(vals) != m:
                raise ConfigError(
                    f"weights.values: expected {m} entries, got {len(vals)}"
                )
            return constant_weights(vals)
        if kind == "sinusoid":
            specs = prm["specs"]
            if len(specs) != m:
                raise ConfigError(
                    f"weights.specs: expected {m} entries, got {len(specs)}"
                )
            return sinusoid_weights([tuple(s) for s in specs],
                                    clamp=prm.get("clamp", True))
        if kind == "square_sine":
            return square_sine_weights(
                m,
                inactive=tuple(prm.get("inactive", ())),
                rate=prm.get("rate", 4.0),
                duty_base=prm.get("duty_base", 20.0),
                duty_step=prm.get("duty_step", 0.1 * math.pi),
                shift=prm.get("shift", 1.0),
                sine_freq=prm.get("sine_freq", 5.0),
                amplitude=prm.get("amplitude", 1.0),
                clamp=prm.get("clamp", True),
            )
        if kind == "table":
            values = prm["values"]
            if len(values) != m:
                raise ConfigError(
                    f"weights.values: expected {m} rows, got {len(values)}"
                )
            return table_weights(prm["times"], values)
        raise ConfigError(f"weights.kind: unknown kind {kind!r}")

    def build_trigger(self) -> TriggerSpec | None:
        if self.trigger is None:
            return None
        return TriggerSpec(self.trigger.kind, self.trigger.threshold,
                           self.trigger.decay)

    def build_schedule(self) -> SwitchingSchedule | None:
        if self.schedule is None:
            return None
        return SwitchingSchedule(
            entries=self.schedule.entries,
            dwell_min=self.schedule.dwell_min,
            subgraphs={k: tuple(v) for k, v in self.schedule.subgraphs.items()},
            union_windows=self.schedule.union_windows,
        )

    # -- document form ----------------------------------------------------

    def to_dict(self) -> dict:
        doc: dict = {
            "name": self.name,
            "notes": self.notes,
            "topology": {
                "nodes": self.topology.nodes,
                "edges": [list(e) for e in self.topology.edges],
            },
            "weights": {"kind": self.weights.kind, **self.weights.params},
            "trigger": None if self.trigger is None else {
                "kind": self.trigger.kind,
                "threshold": self.trigger.threshold,
                "decay": self.trigger.decay,
            },
            "gain": self.gain,
            "x0": list(self.x0),
            "t0": self.t0,
            "t_end": self.t_end,
            "step": self.step,
            "excitation": {
                "window": self.excitation.window,
                "grid_step": self.excitation.grid_step,
                "stride": self.excitation.stride,
            },
            "overshoot": {
                "mode": self.overshoot.mode,
                "value": self.overshoot.value,
                "horizon": self.overshoot.horizon,
                "grid_step": self.overshoot.grid_step,
            },
            "checks": {
                "envelope_slack": self.checks.envelope_slack,
                "zeno_slack": self.checks.zeno_slack,
                "cap_decay": self.checks.cap_decay,
                "cap_fraction": self.checks.cap_fraction,
            },
            "outputs": {"directory": self.outputs.directory},
            "precision": self.precision,
        }
        if self.topology.tree_hint is not None:
            doc["topology"]["tree_hint"] = list(self.topology.tree_hint)
        if self.schedule is not None:
            doc["schedule"] = {
                "dwell_min": self.schedule.dwell_min,
                "subgraphs": {k: list(v) for k, v in
                              sorted(self.schedule.subgraphs.items())},
                "entries": [[t, name] for t, name in self.schedule.entries],
                "union_windows": [list(w) for w in self.schedule.union_windows],
            }
        return doc


def emit_config(config: ScenarioConfig) -> str:
    """Canonical JSON form; stable bytes for identical configurations."""
    return json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n"


def _need(doc, path, kind=None):
    cur = doc
    for part in path.split("."):
        if not isinstance(cur, dict) or part not in cur:
            raise ConfigError(f"{path}: required field is missing")
        cur = cur[part]
    if kind is not None and not isinstance(cur, kind):
        names = kind if isinstance(kind, tuple) else (kind,)
        raise ConfigError(
            f"{path}: expected {'/'.join(k.__name__ for k in names)}, "
            f"got {type(cur).__name__}"
        )
    return cur


def _opt(doc, path, default, defaults_log, kind=None):
    cur = doc
    for part in path.split("."):
        if not isinstance(cur, dict) or part not in cur or cur[part] is None:
            defaults_log.append(path)
            return default
        cur = cur[part]
    if kind is not None and not isinstance(cur, kind):
        names = kind if isinstance(kind, tuple) else (kind,)
        raise ConfigError(
            f"{path}: expected {'/'.join(k.__name__ for k in names)}, "
            f"got {type(cur).__name__}"
        )
    return cur


_NUM = (int, float)


def parse_config(document) -> ScenarioConfig:
    """Parse and validate a scenario document (JSON text or mapping).

    Raises:
        ConfigError: schema and semantic violations, naming the offending
            field.
    """
    if isinstance(document, str):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
    elif isinstance(document, dict):
        doc = document
    else:
        raise ConfigError(f"expected JSON text or mapping, got {type(document)}")
    defaults: list[str] = []

    nodes = _need(doc, "topology.nodes", int)
    edges_raw = _need(doc, "topology.edges", list)
    edges = []
    for i, pair in enumerate(edges_raw, start=1):
        if (not isinstance(pair, (list, tuple)) or len(pair) != 2
                or not all(isinstance(v, int) for v in pair)):
            raise ConfigError(
                f"topology.edges[{i}]: expected a pair of node labels, got {pair!r}"
            )
        edges.append((pair[0], pair[1]))
    hint = _opt(doc, "topology.tree_hint", None, defaults, list)
    topo_cfg = TopologyConfig(
        nodes=nodes, edges=tuple(edges),
        tree_hint=None if hint is None else tuple(int(j) for j in hint),
    )
    # Fail fast with graph-level diagnostics (self-loops, duplicates, range).
    try:
        build_topology(nodes, edges)
    except Exception as exc:
        raise ConfigError(f"topology: {exc}") from None

    wdoc = _need(doc, "weights", dict)
    kind = _need(doc, "weights.kind", str)
    if kind not in _WEIGHT_KINDS:
        raise ConfigError(
            f"weights.kind: unknown kind {kind!r}; expected one of {_WEIGHT_KINDS}"
        )
    weights_cfg = WeightsConfig(kind=kind,
                                params={k: v for k, v in wdoc.items() if k != "kind"})

    tdoc = doc.get("trigger")
    if tdoc is None:
        trigger_cfg = None
        if "trigger" not in doc:
            defaults.append("trigger")
    else:
        tkind = _need(doc, "trigger.kind", str)
        if tkind not in ("static", "dynamic"):
            raise ConfigError(f"trigger.kind: expected static/dynamic, got {tkind!r}")
        thr = _need(doc, "trigger.threshold", _NUM)
        if thr <= 0:
            raise ConfigError(f"trigger.threshold: must be positive, got {thr}")
        decay = _opt(doc, "trigger.decay", 0.0, defaults, _NUM)
        if decay < 0:
            raise ConfigError(f"trigger.decay: must be nonnegative, got {decay}")
        if tkind == "static" and decay != 0.0:
            raise ConfigError("trigger.decay: static trigger requires zero decay")
        trigger_cfg = TriggerConfig(kind=tkind, threshold=float(thr),
                                    decay=float(decay))

    gain = _need(doc, "gain", _NUM)
    if gain <= 0:
        raise ConfigError(f"gain: must be positive, got {gain}")
    x0 = _need(doc, "x0", list)
    if len(x0) != nodes:
        raise ConfigError(f"x0: expected length {nodes}, got {len(x0)}")
    if not all(isinstance(v, _NUM) for v in x0):
        raise ConfigError("x0: entries must be numbers")
    t0 = float(_opt(doc, "t0", 0.0, defaults, _NUM))
    t_end = float(_need(doc, "t_end", _NUM))
    if t_end <= t0:
        raise ConfigError(f"t_end: must exceed t0={t0}, got {t_end}")
    step = _opt(doc, "step", None, defaults, _NUM)
    if step is not None and step <= 0:
        raise ConfigError(f"step: must be positive, got {step}")

    sdoc = doc.get("schedule")
    if sdoc is None:
        schedule_cfg = None
        if "schedule" not in doc:
            defaults.append("schedule")
    else:
        dwell = _need(doc, "schedule.dwell_min", _NUM)
        if dwell <= 0:
            raise ConfigError(f"schedule.dwell_min: must be positive, got {dwell}")
        sub_raw = _need(doc, "schedule.subgraphs", dict)
        subgraphs = {}
        for name, idxs in sub_raw.items():
            if not isinstance(idxs, list) or not all(isinstance(j, int) for j in idxs):
                raise ConfigError(
                    f"schedule.subgraphs.{name}: expected a list of edge indices"
                )
            subgraphs[name] = tuple(idxs)
        entries_raw = _need(doc, "schedule.entries", list)
        entries = []
        for i, ent in enumerate(entries_raw):
            if (not isinstance(ent, (list, tuple)) or len(ent) != 2
                    or not isinstance(ent[0], _NUM) or not isinstance(ent[1], str)):
                raise ConfigError(
                    f"schedule.entries[{i}]: expected [start_time, subgraph_id]"
                )
            if ent[1] not in subgraphs:
                raise ConfigError(
                    f"schedule.entries[{i}]: unknown subgraph {ent[1]!r}"
                )
            entries.append((float(ent[0]), ent[1]))
        windows_raw = _opt(doc, "schedule.union_windows", [], defaults, list)
        windows = []
        for i, w in enumerate(windows_raw):
            if not isinstance(w, (list, tuple)) or len(w) != 2:
                raise ConfigError(
                    f"schedule.union_windows[{i}]: expected [start, end]"
                )
            windows.append((float(w[0]), float(w[1])))
        schedule_cfg = ScheduleConfig(dwell_min=float(dwell), subgraphs=subgraphs,
                                      entries=tuple(entries),
                                      union_windows=tuple(windows))

    window = _opt(doc, "excitation.window", (t_end - t0) / 10.0, defaults, _NUM)
    if window <= 0:
        raise ConfigError(f"excitation.window: must be positive, got {window}")
    exc_step = _opt(doc, "excitation.grid_step", window / 1000.0, defaults, _NUM)
    stride = _opt(doc, "excitation.stride", None, defaults, _NUM)
    excitation_cfg = ExcitationConfig(window=float(window),
                                      grid_step=float(exc_step),
                                      stride=None if stride is None else float(stride))

    mode = _opt(doc, "overshoot.mode", "estimate", defaults, str)
    if mode not in ("estimate", "given"):
        raise ConfigError(f"overshoot.mode: expected estimate/given, got {mode!r}")
    value = _opt(doc, "overshoot.value", None, defaults, _NUM)
    if mode == "given" and (value is None or value < 1.0):
        raise ConfigError("overshoot.value: a supplied overshoot must be >= 1")
    horizon = _opt(doc, "overshoot.horizon", t_end - t0, defaults, _NUM)
    o_step = _opt(doc, "overshoot.grid_step", min(1e-2, window / 200.0),
                  defaults, _NUM)
    overshoot_cfg = OvershootConfig(mode=mode,
                                    value=None if value is None else float(value),
                                    horizon=float(horizon),
                                    grid_step=float(o_step))

    outputs_cfg = OutputsConfig(
        directory=_opt(doc, "outputs.directory", None, defaults, str),
    )

    checks_cfg = ChecksConfig(
        envelope_slack=float(_opt(doc, "checks.envelope_slack", 1e-6, defaults, _NUM)),
        zeno_slack=float(_opt(doc, "checks.zeno_slack", 1e-8, defaults, _NUM)),
        cap_decay=bool(_opt(doc, "checks.cap_decay", True, defaults, (bool,))),
        cap_fraction=float(_opt(doc, "checks.cap_fraction", 0.5, defaults, _NUM)),
    )

    return ScenarioConfig(
        name=str(_opt(doc, "name", "scenario", defaults, str)),
        notes=str(_opt(doc, "notes", "", defaults, str)),
        topology=topo_cfg, weights=weights_cfg, trigger=trigger_cfg,
        gain=float(gain), x0=tuple(float(v) for v in x0), t0=t0, t_end=t_end,
        step=None if step is None else float(step), schedule=schedule_cfg,
        outputs=outputs_cfg,
        excitation=excitation_cfg, overshoot=overshoot_cfg, checks=checks_cfg,
        precision=int(_opt(doc, "precision", 17, defaults, int)),
        applied_defaults=tuple(defaults),
    )


# -- presets ----------------------------------------------------------------

_GOLDEN_NOTES = (
    "Four agents on a six-edge union graph; the schedule alternates two "
    "edge-disjoint spanning trees (G1: path 1-2-3-4, G2: path 3-1-4-2) with "
    "dwell 2*pi. Edge weights follow the clamped square-gated sinusoid "
    "family g_i(t) = max(0, (square(4t, d_i) + 1) * sin(5t)), d_i = 20 - "
    "(i-1)*0.1*pi percent; edge 6 is present but permanently inactive. The "
    "published description of this waveform has unbalanced parentheses and "
    "leaves the fifth duty cycle implicit; clamping at zero and continuing "
    "the duty progression is this package's documented reading (weights "
    "must stay nonnegative). The excitation window spans one full "
    "G1/G2 cycle."
)


def preset_scenario(name: str) -> ScenarioConfig:
    """Built-in scenarios: ``switching-dynamic`` and ``switching-static``."""
    if name not in ("switching-dynamic", "switching-static"):
        raise ConfigError(
            f"unknown preset {name!r}; expected switching-dynamic or "
            "switching-static"
        )
    dwell = 2.0 * math.pi
    t0, t_end = 0.0, 200.0
    entries = []
    t = t0
    k = 0
    while t < t_end:
        entries.append([t, "G1" if k % 2 == 0 else "G2"])
        t += dwell
        k += 1
    windows = []
    for j in range(0, len(entries), 2):
        a = entries[j][0]
        b = entries[j + 2][0] if j + 2 < len(entries) else t
        windows.append([a, b])
    dynamic = name.endswith("dynamic")
    doc = {
        "name": name,
        "notes": _GOLDEN_NOTES,
        "topology": {
            "nodes": 4,
            "edges": [[1, 2], [2, 3], [3, 4], [1, 3], [1, 4], [2, 4]],
            "tree_hint": [1, 2, 3],
        },
        "weights": {
            "kind": "square_sine",
            "inactive": [6],
            "rate": 4.0,
            "duty_base": 20.0,
            "duty_step": 0.1 * math.pi,
            "shift": 1.0,
            "sine_freq": 5.0,
            "amplitude": 1.0,
            "clamp": True,
        },
        "trigger": {
            "kind": "dynamic" if dynamic else "static",
            "threshold": 0.5,
            "decay": 0.06 if dynamic else 0.0,
        },
        "gain": 1.0,
        "x0": [1.0, 2.0, 0.3, 0.4],
        "t0": t0,
        "t_end": t_end,
        "step": None,
        "schedule": {
            "dwell_min": dwell,
            "subgraphs": {"G1": [1, 2, 3], "G2": [4, 5, 6]},
            "entries": entries,
            "union_windows": windows,
        },
        "excitation": {"window": 2.0 * dwell, "grid_step": 0.005, "stride": None},
        "overshoot": {"mode": "estimate", "horizon": t_end - t0, "grid_step": 0.01},
        "checks": {"envelope_slack": 1e-6, "zeno_slack": 1e-8,
                   "cap_decay": True, "cap_fraction": 0.5},
        "precision": 17,
    }
    cfg = parse_config(doc)
    return replace(cfg, applied_defaults=())
