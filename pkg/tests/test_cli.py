import json

import numpy as np
import pytest

from policert.cli import main
from policert.config import canonical_json, load_config, parse_config, ConfigError
from policert.plotting import DimensionError, render_partition_svg


def small_net_doc(k=2):
    rng = np.random.default_rng(0)
    W1 = rng.normal(scale=0.4, size=(4, 2))
    W2 = rng.normal(scale=0.4, size=(k, 4))
    return {
        "inputs": 2, "actions": k,
        "layers": [
            {"weights": W1.tolist(), "bias": [0.0] * 4, "activation": "relu"},
            {"weights": W2.tolist(), "bias": [0.0] * k, "activation": "linear"},
        ],
    }


@pytest.fixture
def run_dir(tmp_path):
    net_path = tmp_path / "net.json"
    net_path.write_text(json.dumps(small_net_doc()))
    config = {
        "environment": "cruise_control",
        "network": "net.json",
        "horizon": 2,
        "phi": 0.5,
        "p_safe": 0.9,
        "samples": 120,
        "seed": 1,
        "budgets": {"leaves": 64, "states": 400, "bnb_nodes": 2000},
    }
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps(config))
    return tmp_path, cfg_path


def test_config_parse_and_defaults(run_dir):
    _, cfg_path = run_dir
    cfg = load_config(cfg_path)
    assert cfg.template_kind == "rect"
    assert cfg.containment is True
    assert cfg.leaf_budget == 64
    assert cfg.min_frac == 0.1


def test_config_rejects_bad_phi():
    with pytest.raises(ConfigError, match=r"phi must be in \(0,1\]"):
        parse_config({"environment": "cruise_control", "horizon": 3, "phi": 0})


def test_config_rejects_unknown_fields():
    with pytest.raises(ConfigError, match="unknown config fields"):
        parse_config({"environment": "x", "horizon": 1, "phi": 0.5, "bogus": 1})


def test_config_rejects_missing_network_file(tmp_path):
    doc = {"environment": "cruise_control", "horizon": 1, "phi": 0.5,
           "network": "missing.json"}
    with pytest.raises(ConfigError, match="network file not found"):
        parse_config(doc, base_dir=tmp_path)


def test_verify_exit_codes_and_report(run_dir, capsys):
    tmp_path, cfg_path = run_dir
    report_path = tmp_path / "out.json"
    code = main(["verify", str(cfg_path), "--report", str(report_path),
                 "--dump-imdp", str(tmp_path / "imdp.txt"),
                 "--dump-partition", str(tmp_path / "part.json")])
    assert code == 0
    out = capsys.readouterr().out
    assert "prob bound" in out and "imdp states" in out
    report = json.loads(report_path.read_text())
    assert set(report) == {"config", "bounds", "global_maxmax", "global_maxmin",
                           "stats", "flags", "passed"}
    assert report["passed"] is True
    assert 0.0 <= report["global_maxmax"] <= 1.0
    assert (tmp_path / "imdp.txt").read_text().startswith("initial ")
    part = json.loads((tmp_path / "part.json").read_text())
    assert part["leaves"]


def test_verify_bad_config_exits_2(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"environment": "cruise_control",
                               "horizon": 2, "phi": 0.0}))
    assert main(["verify", str(cfg)]) == 2
    assert "phi must be in (0,1]" in capsys.readouterr().err


def test_report_schema_roundtrips(run_dir):
    tmp_path, cfg_path = run_dir
    report_path = tmp_path / "out.json"
    assert main(["verify", str(cfg_path), "--report", str(report_path)]) == 0
    report = json.loads(report_path.read_text())
    assert canonical_json(json.loads(canonical_json(report))) == canonical_json(report)
    # echo matches the resolved config byte for byte
    cfg = load_config(cfg_path)
    assert canonical_json(report["config"]) == canonical_json(cfg.resolved_dict())


def test_reports_byte_identical_across_runs(run_dir):
    tmp_path, cfg_path = run_dir
    p1, p2 = tmp_path / "r1.json", tmp_path / "r2.json"
    assert main(["verify", str(cfg_path), "--report", str(p1)]) == 0
    assert main(["verify", str(cfg_path), "--report", str(p2)]) == 0
    d1, d2 = json.loads(p1.read_text()), json.loads(p2.read_text())
    d1["stats"].pop("wall_clock_s")
    d2["stats"].pop("wall_clock_s")
    assert canonical_json(d1) == canonical_json(d2)


def test_simulate_subcommand(run_dir, capsys):
    tmp_path, cfg_path = run_dir
    code = main(["simulate", str(cfg_path), "--start", "8.0,28.0",
                 "--trials", "200", "--dump-traces", str(tmp_path / "traces.txt")])
    assert code == 0
    out = capsys.readouterr().out
    assert "estimate" in out and "wilson" in out
    assert (tmp_path / "traces.txt").exists()


def test_plot_subcommand(run_dir, capsys):
    tmp_path, cfg_path = run_dir
    part = tmp_path / "part.json"
    assert main(["verify", str(cfg_path), "--dump-partition", str(part)]) == 0
    svg_path = tmp_path / "out.svg"
    assert main(["plot", str(part), "-o", str(svg_path)]) == 0
    svg = svg_path.read_text()
    dump = json.loads(part.read_text())
    assert svg.count("<polygon") == len(dump["leaves"])


def test_plot_single_box_leaf():
    dump = {
        "environment": "toy", "actions": ["a", "b"], "state": ["x", "y"],
        "template": {"kind": "rect",
                     "directions": [[1, 0], [0, 1], [-1, 0], [0, -1]]},
        "leaves": [{"state_id": 0, "choice": 0, "depth": 0,
                    "bounds": [1.0, 1.0, 0.0, 0.0],
                    "intervals": [[0.2, 0.4], [0.6, 0.8]]}],
    }
    svg = render_partition_svg(dump)
    assert svg.count("<polygon") == 1
    assert 'fill="rgb(77,178,0)"' in svg  # midpoints ~0.3, 0.7


def test_plot_pendulum_channel_mapping():
    dump = {
        "environment": "inverted_pendulum",
        "actions": ["noop", "left", "right"], "state": ["theta", "omega"],
        "template": {"kind": "rect",
                     "directions": [[1, 0], [0, 1], [-1, 0], [0, -1]]},
        "leaves": [{"state_id": 0, "choice": 0, "depth": 0,
                    "bounds": [1.0, 1.0, 0.0, 0.0],
                    "intervals": [[1.0, 1.0], [0.0, 0.0], [0.5, 0.5]]}],
    }
    svg = render_partition_svg(dump)
    # noop -> red channel, right -> green, left -> blue
    assert 'fill="rgb(255,128,0)"' in svg


def test_plot_rejects_high_dimension_without_axes():
    dump = {
        "environment": "toy", "actions": ["a", "b"], "state": ["x", "y", "z"],
        "template": {"kind": "rect",
                     "directions": [[1, 0, 0], [0, 1, 0], [0, 0, 1],
                                    [-1, 0, 0], [0, -1, 0], [0, 0, -1]]},
        "leaves": [{"state_id": 0, "choice": 0, "depth": 0,
                    "bounds": [1.0] * 3 + [0.0] * 3,
                    "intervals": [[0.5, 0.5], [0.5, 0.5]]}],
    }
    with pytest.raises(DimensionError):
        render_partition_svg(dump)
    svg = render_partition_svg(dump, axes=(0, 2))
    assert svg.count("<polygon") == 1
