import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phiprof import synth
from phiprof.analysis import analyze_parsed
from phiprof.errors import InfeasibleScenarioError, MeasurementWarning
from phiprof.model import DeviceId, RunConfig
from phiprof.parsers import parse_artifacts, parse_offload_report
from phiprof.phases import profile_phases
from phiprof.power import attribute_power, build_state_windows, power_series, rank_placement
from phiprof.sync import SyncedTimeline, find_start


def seventy_second_scenario():
    # 10 iterations of 12 s, each with a 7 s device offload
    sched = synth.PhaseSchedule(iterations=10, position_s=1.0, velocity_s=0.5, redistribute_s=2.5,
                                inner_halo_s=0.5, force_s=8.0, reduce_s=0.15, jitter=0.0)
    off = synth.OffloadSeries(mic_time_s=7.0, pci_time_s=0.25, rank_jitter=0.0)
    return synth.Scenario(RunConfig("synthetic", 1, 1, 50, 2.6e9, 60), schedule=sched, offload=off)


def test_offload_times_sum_to_busy_time():
    run = synth.generate(seventy_second_scenario())
    records = parse_offload_report(run.files["offload.rpt"].splitlines())
    assert sum(r.mic_time_s for r in records) == pytest.approx(70.0, abs=1e-6)
    assert run.truth["loop_end_s"] == pytest.approx(120.0, abs=1e-6)
    assert run.truth["phases"]["mic_compute_s"] == pytest.approx(70.0, abs=1e-6)


def true_timeline(run, parsed):
    offsets = run.truth["offsets"]
    spans = {s: (a[0].tfs + offsets[s], a[-1].tfs + offsets[s]) for s, a in parsed.streams().items()}
    return SyncedTimeline(find_start(parsed.app), offsets, {s: 0.0 for s in offsets}, spans)


@pytest.mark.parametrize("seed,nodes,mics", [(0, 1, 1), (1, 2, 2), (2, 3, 1)])
def test_noiseless_power_recovered_exactly_on_true_clock(seed, nodes, mics):
    run = synth.generate(synth.random_scenario(seed, nodes, mics, noise_w=0.0))
    parsed = parse_artifacts(run.files)
    tl = true_timeline(run, parsed)
    root, _ = profile_phases(parsed.app, parsed.offloads)
    windows = build_state_windows(root, tl, parsed.app, rank_placement(run.config, parsed.offloads),
                                  parsed.offloads)
    streams = [(DeviceId("host", n), s) for n, s in parsed.host_power.items()]
    streams += [(DeviceId("mic", n, d), s) for (n, d), s in parsed.mic_power.items()]
    for device, samples in streams:
        got = attribute_power(power_series(tl, device, samples), windows)
        truth = run.truth["device_states"][device.stream_id]
        assert got.idle_samples == truth["idle_samples"] and got.active_samples == truth["active_samples"]
        assert got.idle_watts_avg == pytest.approx(truth["idle_watts_avg"], rel=1e-12)
        assert got.active_watts_avg == pytest.approx(truth["active_watts_avg"], rel=1e-12)
        assert got.energy_j == pytest.approx(truth["energy_j"], rel=1e-9)


def test_noiseless_power_close_with_estimated_clock():
    run = synth.generate(synth.random_scenario(4, 2, 2, noise_w=0.0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MeasurementWarning)
        report = analyze_parsed(parse_artifacts(run.files), run.config)
    for state in report.device_states:
        truth = run.truth["device_states"][state.device.stream_id]
        assert state.idle_watts_avg == pytest.approx(truth["idle_watts_avg"], rel=0.01)
        assert state.active_watts_avg == pytest.approx(truth["active_watts_avg"], rel=0.01)


def test_gaussian_noise_mean_within_three_standard_errors():
    sc = synth.default_scenario(11)
    sc.mic_power = synth.DevicePower(100.0, 150.0, noise_w=2.0)
    run = synth.generate(sc)
    parsed = parse_artifacts(run.files)
    tl = true_timeline(run, parsed)
    root, _ = profile_phases(parsed.app, parsed.offloads)
    windows = build_state_windows(root, tl, parsed.app, rank_placement(run.config, parsed.offloads),
                                  parsed.offloads)
    mic = DeviceId("mic", 0, 0)
    series = power_series(tl, mic, parsed.mic_power[(0, 0)])
    active = [w for w in windows[mic] if w.state == "active"]
    in_active = np.zeros(len(series.times), dtype=bool)
    for w in active:
        in_active |= (series.times >= w.start) & (series.times < w.end)
    sample = series.watts[in_active][:400]
    assert len(sample) == 400
    assert abs(sample.mean() - 150.0) <= 3 * 2.0 / math.sqrt(400)


def test_same_seed_same_output():
    a = synth.generate(synth.default_scenario(5))
    b = synth.generate(synth.default_scenario(5))
    c = synth.generate(synth.default_scenario(6))
    assert a.files == b.files and a.truth == b.truth
    assert a.files != c.files


def test_infeasible_scenario():
    sc = synth.default_scenario()
    sc.offload.mic_time_s = 100.0
    with pytest.raises(InfeasibleScenarioError, match="does not fit"):
        synth.generate(sc)
    with pytest.raises(InfeasibleScenarioError, match="unknown scenario keys"):
        synth.Scenario.from_dict({"config": sc.config.to_dict(), "colour": 1})


def test_scenario_yaml_round_trip(tmp_path):
    import yaml
    sc = synth.random_scenario(3, 2, 1, 2.0)
    path = tmp_path / "s.yaml"
    path.write_text(yaml.safe_dump(sc.to_dict()))
    assert synth.load_scenario(path) == sc


def test_write_run(tmp_path, default_run):
    out = synth.write_run(default_run, tmp_path / "r")
    names = sorted(p.name for p in out.iterdir())
    assert names == ["app.out", "host-0.log", "manifest", "mic-0-0.log", "offload.rpt", "truth.json"]
    assert json.loads((out / "manifest").read_text())["synthetic"] is True


@settings(max_examples=15)
@given(seed=st.integers(0, 10**6), nodes=st.integers(1, 2), mics=st.integers(1, 2))
def test_truth_is_self_consistent(seed, nodes, mics):
    run = synth.generate(synth.random_scenario(seed, nodes, mics, 2.0))
    t = run.truth
    assert t["total_energy_j"] == pytest.approx(sum(d["energy_j"] for d in t["device_states"].values()))
    p = t["phases"]
    attributed = p["host_compute_s"] + p["halo_exchange_s"] + p["reduce_s"] + p["mic_compute_s"] + p["pci_transfer_s"]
    assert attributed <= p["loop_total_s"] * 1.02
    assert set(t["device_states"]) == {f"host-{n}" for n in range(nodes)} | {
        f"mic-{n}-{d}" for n in range(nodes) for d in range(mics)}
