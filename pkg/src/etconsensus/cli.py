"""Command-line interface.

Subcommands::

    decompose   spanning-tree decomposition report for a scenario
    pe-check    excitation certificate on the scenario horizon
    constants   full certified-constants report
    simulate    run the whole pipeline and write trajectory artifacts
    check       run the whole pipeline, writing only reports and the summary
    sweep       fan out pipelines over parameter substitutions
    preset      emit a built-in scenario configuration

Exit codes: 0 success; 2..8 name the failing pipeline stage (config,
decompose, excitation, constants, simulate, envelope, zeno); 1 unexpected
error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import itertools
import json
import sys
from pathlib import Path

from .config import ScenarioConfig, emit_config, parse_config, preset_scenario
from .errors import ConfigError, EtConsensusError
from .pipeline import STAGE_EXIT_CODES, StageFailure, run_pipeline, stage_report


def _load_config(path: str, overrides=()) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not overrides:
        return parse_config(text)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    for expr in overrides:
        if "=" not in expr:
            raise ConfigError(f"--set needs path=value, got {expr!r}")
        field_path, _, raw = expr.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        _apply_override(doc, field_path.strip(), value)
    return parse_config(doc)


def _print_json(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def _cmd_stage(args, upto: str) -> int:
    config = _load_config(args.config, args.set)
    report = stage_report(config, upto, out_dir=args.out)
    _print_json(report)
    return 0


def _cmd_simulate(args) -> int:
    config = _load_config(args.config, args.set)
    result = run_pipeline(config, out_dir=args.out, write_trajectories=True,
                          backend=args.backend)
    _print_summary(result.summary)
    return 0


def _cmd_check(args) -> int:
    config = _load_config(args.config, args.set)
    result = run_pipeline(config, out_dir=args.out, write_trajectories=False,
                          backend=args.backend)
    _print_summary(result.summary)
    return 0


def _print_summary(summary: dict):
    for name, status in summary["stages"].items():
        print(f"{name}: {status}")
    if "simulate" in summary:
        sim = summary["simulate"]
        print(f"samples={sim['samples']} events={sim['events']} "
              f"runtime={sim['runtime_seconds']:.3f}s "
              f"final_edge_norm={sim['final_edge_norm']:.6g}")
    print("result:", "pass" if summary.get("passed") else "fail")


def _parse_set(expr: str):
    if "=" not in expr:
        raise ConfigError(f"--set needs path=v1,v2,..., got {expr!r}")
    path, _, values = expr.partition("=")
    parsed = []
    for raw in values.split(","):
        try:
            parsed.append(json.loads(raw))
        except json.JSONDecodeError:
            parsed.append(raw)
    return path.strip(), parsed


def _apply_override(doc: dict, path: str, value):
    parts = path.split(".")
    cur = doc
    for part in parts[:-1]:
        if part not in cur or not isinstance(cur[part], dict):
            cur[part] = {}
        cur = cur[part]
    cur[parts[-1]] = value


def _sweep_one(doc: dict, out_dir: str, backend):
    try:
        config = parse_config(doc)
        result = run_pipeline(config, out_dir=out_dir,
                              write_trajectories=True, backend=backend)
        return {"out": out_dir, "passed": bool(result.summary.get("passed")),
                "stages": result.summary["stages"]}
    except StageFailure as exc:
        return {"out": out_dir, "passed": False, "failed_stage": exc.stage,
                "error": str(exc)}
    except EtConsensusError as exc:
        return {"out": out_dir, "passed": False, "failed_stage": "config",
                "error": str(exc)}


def _cmd_sweep(args) -> int:
    config = _load_config(args.config)
    base = config.to_dict()
    axes = [_parse_set(expr) for expr in args.set]
    if not axes:
        raise ConfigError("sweep needs at least one --set path=v1,v2,...")
    out_root = Path(args.out)
    jobs = []
    for combo in itertools.product(*[vals for _, vals in axes]):
        doc = json.loads(json.dumps(base))
        tags = []
        for (path, _), value in zip(axes, combo):
            _apply_override(doc, path, value)
            tags.append(f"{path.replace('.', '_')}={value}")
        run_dir = out_root / "__".join(tags)
        jobs.append((doc, str(run_dir)))
    results = []
    with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
        futures = [pool.submit(_sweep_one, doc, run_dir, args.backend)
                   for doc, run_dir in jobs]
        for fut in futures:
            results.append(fut.result())
    report = {"runs": results,
              "passed": all(r.get("passed") for r in results)}
    out_root.mkdir(parents=True, exist_ok=True)
    (out_root / "sweep_summary.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n")
    _print_json(report)
    return 0 if report["passed"] else 1


def _cmd_preset(args) -> int:
    config = preset_scenario(args.name)
    text = emit_config(config)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="etconsensus",
        description="Event-triggered consensus simulator and bound checker",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, upto, doc in (
        ("decompose", "decompose", "spanning-tree decomposition report"),
        ("pe-check", "excitation", "excitation certificate"),
        ("constants", "constants", "certified constants report"),
    ):
        p = sub.add_parser(name, help=doc)
        p.add_argument("config", help="scenario JSON file")
        p.add_argument("--out", help="directory for the JSON artifact")
        p.add_argument("--set", action="append", default=[],
                       metavar="PATH=VALUE", help="override a config field")
        p.set_defaults(func=lambda args, upto=upto: _cmd_stage(args, upto))

    p = sub.add_parser("simulate", help="full pipeline with trajectory artifacts")
    p.add_argument("config")
    p.add_argument("--out", required=True, help="artifact directory")
    p.add_argument("--backend", choices=("compiled", "pure"))
    p.add_argument("--set", action="append", default=[],
                   metavar="PATH=VALUE", help="override a config field")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("check", help="full pipeline, reports only")
    p.add_argument("config")
    p.add_argument("--out", help="artifact directory")
    p.add_argument("--backend", choices=("compiled", "pure"))
    p.add_argument("--set", action="append", default=[],
                   metavar="PATH=VALUE", help="override a config field")
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("sweep", help="run pipelines over parameter grids")
    p.add_argument("config")
    p.add_argument("--set", action="append", default=[],
                   metavar="PATH=V1,V2", help="sweep axis, e.g. trigger.decay=0.0,0.06")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--backend", choices=("compiled", "pure"))
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("preset", help="emit a built-in scenario")
    p.add_argument("--name", default="switching-dynamic",
                   choices=("switching-dynamic", "switching-static"))
    p.add_argument("--out", help="file path (stdout when omitted)")
    p.set_defaults(func=_cmd_preset)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StageFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return STAGE_EXIT_CODES["config"]
    except EtConsensusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry():
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
