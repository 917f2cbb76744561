import json
import sys

import pytest
import yaml

from phiprof import synth
from phiprof.errors import PlanError
from phiprof.manifest import MANIFEST
from phiprof.orchestrator import (
    EXPERIMENT_MANIFEST, STEPS, STEPS_LOG, CollectError, ExperimentPlan, SamplerTemplates, ShellExecutor,
    SimulatedExecutor, StaticConfig, Timing, collect, enumerate_runs, execute_run, load_plan, make_executor,
    plan_from_dict, read_step_log, run_experiment, run_id_for, split_workload_output,
)

DIVISOR = 400.0


def plan(nodes=1, mics=1, space=((2.6e9, 60),), **kw):
    statics = [StaticConfig("bolt", nodes, mics, 50)]
    kw.setdefault("time_divisor", DIVISOR)
    return ExperimentPlan(statics, list(space), **kw)


def test_borges_style_plan_has_two_static_configs():
    p = plan_from_dict({"static_configs": {"system_name": "borges", "nodes": 1, "mics_per_node": [1, 2],
                                           "problem_size": 50},
                        "config_space": {"host_frequency_hz": 2.6e9, "mic_cores": 60}})
    assert [(s.nodes, s.mics_per_node) for s in p.static_configs] == [(1, 1), (1, 2)]
    assert len(enumerate_runs(p)) == 2


def test_bolt_style_plan_has_six_static_configs(tmp_path):
    path = tmp_path / "bolt.yaml"
    path.write_text(yaml.safe_dump({
        "static_configs": {"system_name": "bolt", "nodes": [1, 2, 3], "mics_per_node": [1, 2],
                           "problem_size": 50},
        "config_space": [{"host_frequency_hz": [1.2e9, 2.6e9], "mic_cores": [30, 60]}],
    }))
    p = load_plan(path)
    assert len(p.static_configs) == 6
    runs = enumerate_runs(p)
    assert len(runs) == 24
    # statics outer, space inner
    assert [(r.nodes, r.mics_per_node) for r in runs[:4]] == [(1, 1)] * 4
    assert run_id_for(0, runs[0]) == "000-bolt-n1-m1-s50-f1.2-c30"


def test_empty_config_space_is_an_error():
    with pytest.raises(PlanError, match="no runs"):
        enumerate_runs(plan(space=()))


def test_bad_plans():
    with pytest.raises(PlanError, match="unknown plan keys"):
        plan_from_dict({"colour": 1})
    with pytest.raises(PlanError, match="idle baseline"):
        enumerate_runs(plan(timing=Timing(pre_sleep_s=5)))
    with pytest.raises(PlanError, match="cannot read"):
        load_plan("/nonexistent/plan.yaml")


def test_executor_selection(monkeypatch):
    monkeypatch.delenv("PHIPROF_EXECUTOR", raising=False)
    assert isinstance(make_executor(plan()), SimulatedExecutor)
    monkeypatch.setenv("PHIPROF_EXECUTOR", "shell")
    assert isinstance(make_executor(plan()), ShellExecutor)
    assert isinstance(make_executor(plan(), "simulated"), SimulatedExecutor)


def test_simulated_run_is_ok_with_four_files(tmp_path):
    p = plan()
    cfg = enumerate_runs(p)[0]
    ex = SimulatedExecutor()
    run = execute_run(cfg, p, tmp_path / "r0", ex)
    assert run.ok, run.cause
    assert sorted(run.declared_files) == ["app.out", "host-0.log", "mic-0-0.log", "offload.rpt"]
    assert ex.live_samplers() == 0
    manifest = collect(run, tmp_path)
    assert len(manifest["files"]) == 5  # the four artifacts and the step log
    assert {f["name"] for f in manifest["files"]} - {STEPS_LOG} == set(run.declared_files)


def test_steps_in_order_with_scaled_gaps(tmp_path):
    p = plan()
    run = execute_run(enumerate_runs(p)[0], p, tmp_path / "r0", SimulatedExecutor())
    log = read_step_log(tmp_path / "r0" / STEPS_LOG)
    assert [(s, n) for s, n, e, _ in log if e == "begin"] == list(enumerate(STEPS, start=1))
    begin = {n: m for _, n, e, m in log if e == "begin"}
    end = {n: m for _, n, e, m in log if e == "end"}
    for name, secs in (("pre_sleep", 20), ("post_sleep", 10), ("cooldown", 60)):
        assert end[name] - begin[name] >= secs / DIVISOR
    assert run.ok


@pytest.mark.parametrize("fail_step", range(1, 10))
def test_injected_failure_leaves_no_samplers(tmp_path, fail_step):
    p = plan(fail_step=fail_step)
    ex = SimulatedExecutor(fail_step)
    run = execute_run(enumerate_runs(p)[0], p, tmp_path / "r0", ex)
    assert run.status == "failed" and run.failed_step == fail_step
    assert ex.live_samplers() == 0
    log = read_step_log(tmp_path / "r0" / STEPS_LOG)
    assert (fail_step, STEPS[fail_step - 1], "failed") in [(s, n, e) for s, n, e, _ in log]
    assert log[-1][1] == "cooldown"  # cool-down still honored


def test_workload_failure_keeps_partial_output(tmp_path):
    p = plan()
    run = execute_run(enumerate_runs(p)[0], p, tmp_path / "r0", SimulatedExecutor(fail_step=4))
    assert run.failed_step == 4 and "status 1" in run.cause
    assert (tmp_path / "r0" / "app.out").stat().st_size > 0
    manifest = collect(run, tmp_path)
    assert manifest["status"] == "failed" and manifest["failed_step_name"] == "workload"
    assert "offload.rpt" in manifest["missing"]


def test_collect_is_idempotent_and_checks_files(tmp_path):
    p = plan()
    run = execute_run(enumerate_runs(p)[0], p, tmp_path / "out" / "r0", SimulatedExecutor())
    first = collect(run, tmp_path / "out")
    again = collect(run, tmp_path / "out")
    assert first == again
    (tmp_path / "out" / "r0" / "offload.rpt").unlink()
    with pytest.raises(CollectError, match="offload.rpt"):
        collect(run, tmp_path / "out")


def test_multi_node_run_has_one_host_log_per_node(tmp_path):
    p = plan(nodes=3, mics=2)
    run = execute_run(enumerate_runs(p)[0], p, tmp_path / "r0", SimulatedExecutor())
    manifest = collect(run, tmp_path)
    names = {f["name"] for f in manifest["files"]}
    assert {n for n in names if n.startswith("host-")} == {"host-0.log", "host-1.log", "host-2.log"}
    assert sum(n.startswith("mic-") for n in names) == 6


def test_experiment_manifest(tmp_path):
    p = plan(space=((2.6e9, 60), (1.2e9, 30)))
    runs = run_experiment(p, tmp_path, SimulatedExecutor())
    data = json.loads((tmp_path / EXPERIMENT_MANIFEST).read_text())
    assert data["complete"] and data["planned_runs"] == 2
    assert [r["run_id"] for r in data["runs"]] == [r.run_id for r in runs]
    for r in runs:
        assert (tmp_path / r.run_id / MANIFEST).is_file()


def test_split_workload_output(tmp_path):
    raw = tmp_path / "raw"
    raw.write_text("[0] TIMER loop 1.0\n[0] [Offload] [MIC 0] [Tag 1] [CPU Time] 0.1(seconds)\nbanner\n")
    split_workload_output(raw, tmp_path / "app", tmp_path / "rpt")
    assert (tmp_path / "app").read_text() == "[0] TIMER loop 1.0\nbanner\n"
    assert (tmp_path / "rpt").read_text().startswith("[0] [Offload]")


def shell_plan(tmp_path, workload):
    run = synth.generate(synth.default_scenario(1))
    src = tmp_path / "src"
    src.mkdir()
    for name, text in run.files.items():
        (src / name).write_text(text)
    py = sys.executable
    return plan(
        executor="shell", time_divisor=50.0,
        workload=workload.format(py=py, src=src),
        samplers=SamplerTemplates(
            host=f"{{python}} -m phiprof sample --kind host_replay --source {src}/host-0.log "
                 "--out {output}",
            mic=f"{{python}} -m phiprof sample --kind mic_replay --source {src}/mic-0-0.log "
                "--out {output}"),
    )


def test_shell_executor_runs_real_processes(tmp_path):
    p = shell_plan(tmp_path, "cat {src}/app.out {src}/offload.rpt")
    ex = ShellExecutor()
    run = execute_run(enumerate_runs(p)[0], p, tmp_path / "r0", ex)
    assert run.ok, run.cause
    assert ex.live_samplers() == 0
    assert (tmp_path / "r0" / "offload.rpt").read_text() == (tmp_path / "src" / "offload.rpt").read_text()


def test_shell_workload_failure_stops_samplers(tmp_path):
    p = shell_plan(tmp_path, "{py} -c 'import sys; sys.exit(3)'")
    ex = ShellExecutor()
    run = execute_run(enumerate_runs(p)[0], p, tmp_path / "r0", ex)
    assert run.failed_step == 4 and "status 3" in run.cause
    assert ex.live_samplers() == 0
    assert (tmp_path / "r0" / "host-0.log").stat().st_size > 0


def test_enumeration_is_deterministic():
    data = {"static_configs": {"system_name": "bolt", "nodes": [1, 2, 3], "mics_per_node": [1, 2],
                               "problem_size": [20, 50]},
            "config_space": {"host_frequency_hz": [1.2e9, 2.6e9], "mic_cores": [30, 60]}}
    a, b = enumerate_runs(plan_from_dict(data)), enumerate_runs(plan_from_dict(data))
    assert a == b and len(a) == 48
    assert len({run_id_for(i, c) for i, c in enumerate(a)}) == 48
