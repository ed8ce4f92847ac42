import json
import shutil

import numpy as np
import pytest

from bangride.cli import main
from bangride.scenario import (
    ConfigError,
    Scenario,
    detect_switches,
    dump_scenario,
    load_scenario,
    read_trace,
    resimulate_trace,
    write_trace,
)


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def write_cfg(path, cfg):
    path.write_text(json.dumps(cfg))
    return path


LINEAR = {
    "model": "linear",
    "parameters": {"A": [[0.5]], "B": [1.0], "C": [[1.0]], "D": [1.0], "E": [1.0], "F": 0.0},
    "t_f": 20,
    "u_max": 2.0,
    "y_max": [1.5],
}


def test_check_reports_ecm_bounds(capsys, scenarios_dir, tmp_path):
    code, out, _ = run(capsys, "check", scenarios_dir / "ecm_selector.json", "--out", tmp_path)
    assert code == 0
    report = json.loads((tmp_path / "check.json").read_text())
    assert report == json.loads(out)
    assert report["sampling_bounds"]["ts1"] == pytest.approx(500.0, abs=0.01)
    assert report["sampling_bounds"]["ts2"] == pytest.approx(327.27, abs=0.01)
    assert report["all_hold"]


def test_check_spm_reports_raw_relative_degree(capsys, scenarios_dir, tmp_path):
    code, _, _ = run(capsys, "check", scenarios_dir / "spm_selector.json", "--out", tmp_path, "--quiet")
    report = json.loads((tmp_path / "check.json").read_text())
    assert code == 0 and report["relative_degree_raw"] == 0 and report["sampling_bounds"]["t_s_valid"]


def test_simulate_writes_trace_and_metrics(capsys, tmp_path):
    cfg = write_cfg(tmp_path / "lin.json", {**LINEAR, "strategy": "selector"})
    code, out, _ = run(capsys, "simulate", cfg, "--out", tmp_path / "o")
    assert code == 0
    metrics = json.loads((tmp_path / "o" / "metrics.json").read_text())
    assert metrics["feasible"] and metrics["strategy"] == "selector"
    assert "wall_time_s" in json.loads(out) and "wall_time_s" not in metrics
    header = (tmp_path / "o" / "trace.csv").read_text().splitlines()[0]
    assert header == "t,time_s,u,y1,x1,active_idx,cost_cum"


def test_quiet_suppresses_stdout(capsys, tmp_path):
    cfg = write_cfg(tmp_path / "lin.json", LINEAR)
    code, out, _ = run(capsys, "simulate", cfg, "--out", tmp_path, "--quiet")
    assert code == 0 and out == ""


def test_negative_capacitance_is_a_config_error(capsys, scenarios_dir, tmp_path):
    raw = json.loads((scenarios_dir / "ecm_selector.json").read_text())
    raw["parameters"]["C1"] = -2e6
    code, _, err = run(capsys, "simulate", write_cfg(tmp_path / "bad.json", raw), "--out", tmp_path)
    assert code == 1 and "C1" in err


@pytest.mark.parametrize(
    "patch, field",
    [
        ({"colour": 1}, "colour"),
        ({"parameters": {**LINEAR["parameters"], "G": 1}}, "G"),
        ({"strategy": "mpc"}, "strategy"),
        ({"t_f": -1}, "t_f"),
        ({"u_max": "inf"}, "u_max"),
        ({"output": {"trace": "a.csv", "plot": "b.png"}}, "plot"),
        ({"strategy": "oracle"}, "grid"),
        ({"strategy": "pid"}, "gains"),
        ({"strategy": "pid", "gains": [{"kp": 1, "kx": 2}]}, "kx"),
    ],
)
def test_config_errors_name_the_field(capsys, tmp_path, patch, field):
    code, _, err = run(capsys, "simulate", write_cfg(tmp_path / "c.json", {**LINEAR, **patch}), "--out", tmp_path)
    assert code == 1 and field in err


def test_missing_and_malformed_files(capsys, tmp_path):
    code, _, err = run(capsys, "check", tmp_path / "nope.json")
    assert code == 1
    (tmp_path / "broken.json").write_text("{")
    code, _, err = run(capsys, "check", tmp_path / "broken.json")
    assert code == 1 and "invalid JSON" in err


def test_negative_tol_active_flag(capsys, tmp_path):
    cfg = write_cfg(tmp_path / "lin.json", LINEAR)
    assert run(capsys, "simulate", cfg, "--out", tmp_path, "--tol-active", "-1")[0] == 1


def test_runtime_failure_exit_code(capsys, scenarios_dir, tmp_path):
    raw = json.loads((scenarios_dir / "counterexample_oracle.json").read_text())
    raw["grid"] = {"u_lo": 2.0, "u_hi": 3.0, "points": 3}
    code, _, err = run(capsys, "simulate", write_cfg(tmp_path / "c.json", raw), "--out", tmp_path)
    assert code == 2 and "no feasible" in err


def test_infeasible_result_exit_code(capsys, tmp_path):
    # zero PID gains hold u = 0 while the initial state already violates the bound
    cfg = {**LINEAR, "strategy": "pid", "gains": [{"kp": 0.0}], "x0": [5.0]}
    code, out, _ = run(capsys, "simulate", write_cfg(tmp_path / "c.json", cfg), "--out", tmp_path)
    metrics = json.loads(out)
    assert code == 3 and not metrics["feasible"] and metrics["max_violation"][1] == pytest.approx(3.5)


def test_counterexample_oracle_metrics(capsys, scenarios_dir, tmp_path):
    code, out, _ = run(capsys, "oracle", scenarios_dir / "counterexample_oracle.json", "--out", tmp_path)
    m = json.loads(out)
    assert code == 0
    assert m["oracle"]["J"] == 1.0 and m["oracle"]["inputs"] == [0.0, 1.0]
    assert m["bangride"]["J"] == 0.0 and m["bangride"]["verified"]
    assert m["counterexample"]["gamma"] == -1.0
    assert m["J_oracle_minus_J_bangride"] == 1.0


def test_ecm_short_oracle_matches_bangride(capsys, scenarios_dir, tmp_path):
    code, out, _ = run(capsys, "oracle", scenarios_dir / "ecm_oracle_short.json", "--out", tmp_path)
    m = json.loads(out)
    assert code == 0 and m["J_oracle_minus_J_bangride"] <= 0.0
    assert m["bangride"]["verified"]


def test_config_round_trip_is_fixed_point(scenarios_dir, tmp_path):
    for path in sorted(scenarios_dir.glob("*.json")):
        first = dump_scenario(load_scenario(path))
        (tmp_path / "again.json").write_text(first)
        assert dump_scenario(load_scenario(tmp_path / "again.json")) == first, path.name


def test_scenario_from_dict_requires_model():
    with pytest.raises(ConfigError, match="model"):
        Scenario.from_dict({"t_f": 3})


@pytest.mark.parametrize("name", ["spm_selector.json", "counterexample_oracle.json", "ecm_oracle_short.json"])
def test_repeated_runs_are_byte_identical(capsys, scenarios_dir, tmp_path, name):
    cmd = "oracle" if "oracle" in name else "simulate"
    for sub in ("a", "b"):
        run(capsys, cmd, scenarios_dir / name, "--out", tmp_path / sub, "--seed", 7)
    for f in ("trace.csv", "metrics.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_trace_round_trip(capsys, scenarios_dir, tmp_path):
    path = scenarios_dir / "spm_selector.json"
    run(capsys, "simulate", path, "--out", tmp_path, "--quiet")
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    trace = read_trace(tmp_path / "trace.csv")
    again = resimulate_trace(load_scenario(path).build_problem(), trace)
    assert again.J == pytest.approx(metrics["J"], rel=1e-12)
    assert trace.cost_cum[-1] == pytest.approx(metrics["J"], rel=1e-12)
    np.testing.assert_array_equal(again.u, trace.u)


def test_read_trace_rejects_bad_header(tmp_path):
    (tmp_path / "t.csv").write_text("t,u\n0,1\n")
    with pytest.raises(ConfigError):
        read_trace(tmp_path / "t.csv")


def test_detect_switches_examples():
    assert detect_switches([1] * 20) == []
    assert detect_switches([0, 0, 0, 1, 0, 0, 0]) == []
    assert detect_switches([0, 0, 1, 1, 0, 0, 0]) == []
    ev = detect_switches([0, 0, 1, 1, 1, 1], hold=3, t_s=0.5)
    assert [(e.t, e.time_s, e.from_index, e.to_index) for e in ev] == [(2, 1.0, 0, 1)]
    assert len(detect_switches([0, 1, 0, 1], hold=1)) == 3
    # an idle step resets a pending run
    assert detect_switches([0, 1, 1, -1, 1, 1]) == []
    with pytest.raises(ValueError):
        detect_switches([0], hold=0)


def test_switch_times_strictly_increase():
    rng = np.random.default_rng(3)
    idx = rng.integers(-1, 3, 2000)
    ev = detect_switches(idx, hold=2)
    times = [e.t for e in ev]
    assert times == sorted(set(times))
    assert all(e.from_index != e.to_index for e in ev)


def test_switches_command_on_flicker_trace(capsys, ecm_selector_run, tmp_path):
    tr = ecm_selector_run
    write_trace(tmp_path / "ecm.csv", tr, 0.05)
    code, out, _ = run(capsys, "switches", tmp_path / "ecm.csv")
    events = json.loads(out)
    assert code == 0 and len(events) == 1
    assert (events[0]["from"], events[0]["to"]) == (0, 1)
    assert events[0]["time_s"] == pytest.approx(421.3, abs=0.5)
    # long hold swallows nothing here: the switch is permanent
    assert json.loads(run(capsys, "switches", tmp_path / "ecm.csv", "--hold", 1000)[1]) == events


def test_switches_command_flicker(capsys, tmp_path):
    lines = ["t,time_s,u,y1,x1,active_idx,cost_cum"]
    for t, a in enumerate([0, 0, 1, 0, 0, 0]):
        lines.append(f"{t},{t * 1.0},1.0,0.0,0.0,{a},0.0")
    (tmp_path / "f.csv").write_text("\n".join(lines) + "\n")
    code, out, _ = run(capsys, "switches", tmp_path / "f.csv")
    assert code == 0 and json.loads(out) == []


def test_compare_self_is_zero(capsys, tmp_path):
    cfg = write_cfg(tmp_path / "lin.json", LINEAR)
    shutil.copy(cfg, tmp_path / "lin2.json")
    code, out, _ = run(capsys, "compare", cfg, tmp_path / "lin2.json", "--out", tmp_path)
    rep = json.loads(out)
    assert code == 0
    for r in rep["runs"]:
        assert r["max_abs_du"] == 0.0 and r["max_abs_dy"] == [0.0] and r["dJ"] == 0.0
    rows = (tmp_path / "compare.csv").read_text().splitlines()
    assert rows[0] == "t,time_s,du[lin],dy1[lin],dcost_cum[lin],du[lin2],dy1[lin2],dcost_cum[lin2]"
    assert all(float(v) == 0.0 for row in rows[1:] for v in row.split(",")[2:])


def test_compare_rejects_misaligned(capsys, tmp_path):
    a = write_cfg(tmp_path / "a.json", LINEAR)
    b = write_cfg(tmp_path / "b.json", {**LINEAR, "t_f": 10})
    code, _, err = run(capsys, "compare", a, b, "--out", tmp_path)
    assert code == 1 and "misaligned" in err


def test_compare_selector_vs_greedy_on_ecm(capsys, scenarios_dir, tmp_path):
    code, out, _ = run(
        capsys, "compare", scenarios_dir / "ecm_selector.json", scenarios_dir / "ecm_greedy.json", "--out", tmp_path
    )
    rep = json.loads(out)
    assert code == 0
    assert rep["runs"][1]["max_abs_du"] <= 1e-9
    assert rep["switch"]["to"] == 1


@pytest.mark.slow
def test_compare_pid_gain_sets(capsys, scenarios_dir, tmp_path):
    code, out, _ = run(
        capsys,
        "compare",
        scenarios_dir / "ecm_selector.json",
        scenarios_dir / "ecm_pid_mtns.json",
        scenarios_dir / "ecm_pid_tuner.json",
        "--out",
        tmp_path,
    )
    runs = {r["name"]: r for r in json.loads(out)["runs"]}
    assert code == 0
    assert runs["ecm_pid_mtns"]["peak_post_switch_error"] < runs["ecm_pid_tuner"]["peak_post_switch_error"]
