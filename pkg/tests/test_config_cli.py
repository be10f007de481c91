import json
from dataclasses import replace

import pytest

from etconsensus.cli import main
from etconsensus.config import emit_config, parse_config, preset_scenario
from etconsensus.errors import ConfigError
from etconsensus.pipeline import STAGE_EXIT_CODES, StageFailure, run_pipeline


def minimal_doc():
    return {
        "topology": {"nodes": 2, "edges": [[1, 2]]},
        "weights": {"kind": "constant", "values": [1.0]},
        "trigger": {"kind": "static", "threshold": 0.2},
        "gain": 1.0,
        "x0": [0.0, 1.0],
        "t_end": 5.0,
    }


class TestParseConfig:
    def test_minimal_config_gets_documented_defaults(self):
        cfg = parse_config(minimal_doc())
        assert cfg.step is None  # resolved by the step rule at run time
        assert cfg.excitation.window == pytest.approx(0.5)
        assert "step" in cfg.applied_defaults
        assert "excitation.window" in cfg.applied_defaults
        assert "overshoot.horizon" in cfg.applied_defaults

    def test_round_trip_identity(self):
        cfg = parse_config(minimal_doc())
        again = parse_config(emit_config(cfg))
        assert replace(again, applied_defaults=()) == replace(
            cfg, applied_defaults=())

    def test_preset_round_trip_and_values(self):
        cfg = preset_scenario("switching-dynamic")
        assert cfg.x0 == (1.0, 2.0, 0.3, 0.4)
        assert cfg.trigger.threshold == 0.5
        assert cfg.trigger.decay == 0.06
        assert cfg.schedule is not None
        assert cfg.notes  # the waveform ambiguity is documented inline
        again = parse_config(emit_config(cfg))
        assert replace(again, applied_defaults=()) == replace(
            cfg, applied_defaults=())

    def test_static_preset(self):
        cfg = preset_scenario("switching-static")
        assert cfg.trigger.kind == "static"
        assert cfg.trigger.decay == 0.0
        assert cfg.trigger.threshold == 0.5

    @pytest.mark.parametrize("mutate,field_name", [
        (lambda d: d.pop("gain"), "gain"),
        (lambda d: d.update(gain=-1.0), "gain"),
        (lambda d: d.update(x0=[1.0]), "x0"),
        (lambda d: d.update(x0=[1.0, "nope"]), "x0"),
        (lambda d: d.update(t_end=-1.0), "t_end"),
        (lambda d: d["trigger"].update(threshold=-0.1), "trigger.threshold"),
        (lambda d: d["weights"].update(kind="mystery"), "weights.kind"),
        (lambda d: d["topology"].update(edges=[[1, 1]]), "topology"),
    ])
    def test_errors_name_the_field(self, mutate, field_name):
        doc = minimal_doc()
        mutate(doc)
        with pytest.raises(ConfigError, match=field_name.replace(".", r"\.")):
            parse_config(doc)

    def test_invalid_json_text(self):
        with pytest.raises(ConfigError, match="invalid JSON"):
            parse_config("{not json")

    def test_static_trigger_with_decay_rejected(self):
        doc = minimal_doc()
        doc["trigger"] = {"kind": "static", "threshold": 0.2, "decay": 0.1}
        with pytest.raises(ConfigError, match="zero decay"):
            parse_config(doc)

    def test_schedule_entries_validated(self):
        doc = minimal_doc()
        doc["schedule"] = {
            "dwell_min": 1.0,
            "subgraphs": {"A": [1]},
            "entries": [[0.0, "B"]],
            "union_windows": [[0.0, 2.0]],
        }
        with pytest.raises(ConfigError, match="unknown subgraph"):
            parse_config(doc)


class TestPipeline:
    def test_minimal_pipeline_passes(self, tmp_path):
        cfg = parse_config(minimal_doc())
        result = run_pipeline(cfg, out_dir=tmp_path)
        assert result.summary["passed"]
        for name in ("config.json", "decomposition.json", "pe_certificate.json",
                     "constants.json", "trajectory.csv", "events.csv",
                     "events.json", "series.csv", "event_markers.csv",
                     "summary.json"):
            assert (tmp_path / name).exists(), name

    def test_artifacts_byte_identical_across_runs(self, tmp_path):
        cfg = preset_scenario("switching-dynamic")
        outs = []
        for run in ("a", "b"):
            out = tmp_path / run
            run_pipeline(cfg, out_dir=out)
            outs.append(out)
        for path_a in sorted(outs[0].iterdir()):
            path_b = outs[1] / path_a.name
            assert path_a.read_bytes() == path_b.read_bytes(), path_a.name

    def test_trajectory_precision_round_trips(self, tmp_path):
        cfg = parse_config(minimal_doc())
        result = run_pipeline(cfg, out_dir=tmp_path)
        lines = (tmp_path / "trajectory.csv").read_text().splitlines()
        header = lines[0].split(",")
        first = lines[1].split(",")
        x1 = float(first[header.index("x_1")])
        assert x1 == result.result.states[0, 0]  # 17 digits round-trip

    def test_disconnected_topology_fails_at_decompose(self, tmp_path):
        doc = minimal_doc()
        doc["topology"] = {"nodes": 4, "edges": [[1, 2], [3, 4]]}
        doc["weights"] = {"kind": "constant", "values": [1.0, 1.0]}
        doc["x0"] = [0.0, 1.0, 0.0, 1.0]
        cfg = parse_config(doc)
        with pytest.raises(StageFailure) as excinfo:
            run_pipeline(cfg, out_dir=tmp_path)
        assert excinfo.value.stage == "decompose"
        assert excinfo.value.exit_code == STAGE_EXIT_CODES["decompose"]
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert "failed" in summary["stages"]["decompose"]

    def test_not_pe_fails_at_excitation(self, tmp_path):
        doc = minimal_doc()
        doc["weights"] = {"kind": "constant", "values": [0.0]}
        cfg = parse_config(doc)
        with pytest.raises(StageFailure) as excinfo:
            run_pipeline(cfg, out_dir=tmp_path)
        assert excinfo.value.stage == "excitation"

    def test_uncertifiable_decay_without_cap_fails_at_constants(self, tmp_path):
        doc = minimal_doc()
        doc["trigger"] = {"kind": "dynamic", "threshold": 0.2, "decay": 50.0}
        doc["checks"] = {"cap_decay": False}
        cfg = parse_config(doc)
        with pytest.raises(StageFailure) as excinfo:
            run_pipeline(cfg, out_dir=tmp_path)
        assert excinfo.value.stage == "constants"

    def test_events_export_fields(self, tmp_path):
        cfg = parse_config(minimal_doc())
        run_pipeline(cfg, out_dir=tmp_path)
        header = (tmp_path / "events.csv").read_text().splitlines()[0]
        assert header == "agent,time,broadcast_value,trigger_kind"
        events = json.loads((tmp_path / "events.json").read_text())
        assert events["trigger_kind"] == "static"
        assert all({"agent", "time", "broadcast_value"} <= set(e)
                   for e in events["events"])


class TestCli:
    def write_config(self, tmp_path, doc=None):
        path = tmp_path / "scenario.json"
        path.write_text(json.dumps(doc or minimal_doc()))
        return str(path)

    def test_preset_writes_file(self, tmp_path, capsys):
        out = tmp_path / "preset.json"
        assert main(["preset", "--name", "switching-dynamic",
                     "--out", str(out)]) == 0
        cfg = parse_config(out.read_text())
        assert cfg.name == "switching-dynamic"

    def test_preset_stdout(self, capsys):
        assert main(["preset", "--name", "switching-static"]) == 0
        cfg = parse_config(capsys.readouterr().out)
        assert cfg.trigger.kind == "static"

    def test_decompose_subcommand(self, tmp_path, capsys):
        code = main(["decompose", self.write_config(tmp_path)])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["tree_edges"] == [1]

    def test_pe_check_subcommand(self, tmp_path, capsys):
        code = main(["pe-check", self.write_config(tmp_path)])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["lower"] == pytest.approx(0.5, abs=1e-10)

    def test_constants_subcommand(self, tmp_path, capsys):
        code = main(["constants", self.write_config(tmp_path)])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["rate"] > 0
        assert report["min_event_gap"] > 0

    def test_simulate_subcommand_writes_artifacts(self, tmp_path, capsys):
        out = tmp_path / "run"
        code = main(["simulate", self.write_config(tmp_path), "--out", str(out)])
        assert code == 0
        assert (out / "trajectory.csv").exists()
        assert "result: pass" in capsys.readouterr().out

    def test_check_subcommand_reports_only(self, tmp_path, capsys):
        out = tmp_path / "run"
        code = main(["check", self.write_config(tmp_path), "--out", str(out)])
        assert code == 0
        assert not (out / "trajectory.csv").exists()
        assert (out / "summary.json").exists()

    def test_stage_exit_codes(self, tmp_path):
        doc = minimal_doc()
        doc["topology"] = {"nodes": 4, "edges": [[1, 2], [3, 4]]}
        doc["weights"] = {"kind": "constant", "values": [1.0, 1.0]}
        doc["x0"] = [0.0, 1.0, 0.0, 1.0]
        code = main(["check", self.write_config(tmp_path, doc)])
        assert code == STAGE_EXIT_CODES["decompose"] == 3

    def test_config_error_exit_code(self, tmp_path):
        doc = minimal_doc()
        doc.pop("gain")
        code = main(["check", self.write_config(tmp_path, doc)])
        assert code == STAGE_EXIT_CODES["config"] == 2

    def test_missing_file_is_config_error(self):
        assert main(["check", "/nonexistent/path.json"]) == 2

    def test_set_override_mirrors_config_fields(self, tmp_path, capsys):
        code = main(["constants", self.write_config(tmp_path),
                     "--set", "gain=0.5", "--set", "trigger.threshold=0.4"])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["gain"] == 0.5
        assert report["threshold"] == 0.4

    def test_static_summary_reports_ball(self, tmp_path, capsys):
        out = tmp_path / "run"
        code = main(["check", self.write_config(tmp_path), "--out", str(out)])
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["ball"]["within"]
        assert summary["ball"]["tail_limsup"] <= summary["ball"]["radius"]

    def test_outputs_directory_field_used_as_default(self, tmp_path, capsys):
        doc = minimal_doc()
        doc["outputs"] = {"directory": str(tmp_path / "from_config")}
        code = main(["check", self.write_config(tmp_path, doc)])
        assert code == 0
        assert (tmp_path / "from_config" / "summary.json").exists()

    def test_sweep_runs_grid(self, tmp_path, capsys):
        out = tmp_path / "sweep"
        code = main(["sweep", self.write_config(tmp_path),
                     "--set", "trigger.threshold=0.2,0.4",
                     "--set", "gain=0.5,1.0",
                     "--out", str(out), "--jobs", "2"])
        assert code == 0
        summary = json.loads((out / "sweep_summary.json").read_text())
        assert len(summary["runs"]) == 4
        assert summary["passed"]
        run_dirs = [p for p in out.iterdir() if p.is_dir()]
        assert len(run_dirs) == 4
        for run_dir in run_dirs:
            assert (run_dir / "summary.json").exists()
