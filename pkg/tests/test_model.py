import pickle

import pytest
from hypothesis import given
from hypothesis import strategies as st

from phiprof.errors import ValidationError
from phiprof.model import (
    AppTimeline, DeviceId, DeviceStateReport, HostPowerSample, MicPowerSample, OffloadRecord, PerfSample,
    PhaseTimings, RunConfig, TimeAnchor, Violation, ensure_valid, format_wall, parse_wall, validate,
    validate_stream, wall_delta,
)

from conftest import anchor

TIMERS = dict(position=10.0, velocity=5.0, redistribute=30.0, force=70.0, halo_exchange=8.2,
              reduce=1.1, inner_transfer=12.0, loop=120.5)


def fields_of(violations):
    return {v.field for v in violations}


def test_mic_sample_connector_sum_is_valid():
    s = MicPowerSample(anchor(), 50.0, 40.0, 30.0, 120.0)
    assert validate(s) == []


def test_mic_sample_wrong_total_flagged():
    s = MicPowerSample(anchor(), 50.0, 40.0, 30.0, 121.0)
    assert fields_of(validate(s)) == {"total_watts"}


def test_host_sample_total_is_core_plus_dram():
    s = HostPowerSample.from_parts(anchor(), 35.1, 8.2)
    assert s.total_watts == 35.1 + 8.2
    assert validate(s) == []
    assert fields_of(validate(HostPowerSample(anchor(), 35.1, 8.2, 50.0))) == {"total_watts"}


def test_vi_above_double_bound_flagged():
    cfg = RunConfig("borges", 1, 1, 50, 2.6e9, 60, precision="double", vector_intensity=9.0)
    problems = validate(cfg)
    assert [v.field for v in problems] == ["vector_intensity"]
    assert "[1,8]" in problems[0].rule


def test_vi_single_precision_allows_up_to_16():
    assert validate(RunConfig("x", 1, 1, 50, 2.6e9, 60, precision="single", vector_intensity=16.0)) == []
    assert validate(RunConfig("x", 1, 1, 50, 2.6e9, 60, precision="single", vector_intensity=16.5))


def test_offload_cpu_below_mic_flagged():
    rec = OffloadRecord(0, 0, 1, 0.05, 0.09, 10, 10)
    problems = validate(rec)
    assert fields_of(problems) == {"cpu_time_s"}
    assert "cpu_time >= mic_time when defined" in problems[0].rule


def test_offload_undefined_cpu_time_is_valid():
    rec = OffloadRecord(0, 0, 1, 0.0, 0.09, 10, 10)
    assert validate(rec) == []
    assert not rec.cpu_time_defined


def test_ensure_valid_raises_with_violations():
    with pytest.raises(ValidationError) as err:
        ensure_valid(OffloadRecord(0, 0, 1, 0.05, 0.09, 10, 10))
    assert err.value.violations[0].field == "cpu_time_s"


def test_negative_tfs_flagged():
    assert fields_of(validate(TimeAnchor(10, -0.5))) == {"tfs"}


def test_app_timeline_missing_and_oversized_timers():
    timers = dict(TIMERS)
    del timers["reduce"]
    timers["force"] = 200.0
    got = fields_of(validate(AppTimeline(0, timers)))
    assert got == {"named_timers[reduce]", "named_timers[force]"}
    assert validate(AppTimeline(0, TIMERS)) == []


def test_phase_timings_slack():
    ok = PhaseTimings(33.0, 8.2, 1.1, 70.0, 7.7, 120.0, "residual")
    assert validate(ok) == []
    # 2% over the loop is tolerated, more is not
    assert validate(PhaseTimings(33.0, 8.2, 1.1, 70.0, 7.7 + 2.4, 120.0, "residual")) == []
    assert fields_of(validate(PhaseTimings(33.0, 8.2, 1.1, 70.0, 7.7 + 2.5, 120.0, "residual"))) == {"loop_total_s"}


def test_device_state_energy_identity():
    r = DeviceStateReport.build(DeviceId("host", 0), 40.0, 150.0, 100, 200, 10.0, 20.0)
    assert r.energy_j == 3400.0
    assert not r.low_samples
    assert DeviceStateReport.build(DeviceId("host", 0), 40.0, 150.0, 99, 200, 10.0, 20.0).low_samples


def test_wall_clock_helpers():
    assert parse_wall("13:05:02") == 47102
    assert format_wall(47102) == "13:05:02"
    assert wall_delta(parse_wall("00:00:05"), parse_wall("23:59:58")) == 7
    assert wall_delta(parse_wall("23:59:58"), parse_wall("00:00:05")) == -7
    with pytest.raises(ValueError):
        parse_wall("24:00:00")


def test_stream_validation_cross_midnight():
    stream = [TimeAnchor(parse_wall("23:59:59"), 0.5), TimeAnchor(parse_wall("00:00:01"), 2.4)]
    assert validate_stream(stream) == []
    bad = [TimeAnchor(parse_wall("23:59:59"), 0.5), TimeAnchor(parse_wall("00:00:09"), 2.4)]
    assert fields_of(validate_stream(bad)) == {"anchors[1].wall_clock"}
    assert fields_of(validate_stream([TimeAnchor(5, 1.0), TimeAnchor(5, 1.0)])) == {"anchors[1].tfs"}


def test_device_id_stream_round_trip():
    for d in (DeviceId("host", 3), DeviceId("mic", 2, 1)):
        assert DeviceId.from_stream_id(d.stream_id) == d
    with pytest.raises(ValueError):
        DeviceId.from_stream_id("gpu-0")


def test_values_are_immutable_and_picklable():
    p = PerfSample(anchor(), {"LLC_MISS": 3})
    with pytest.raises(TypeError):
        p.counters["LLC_MISS"] = 4
    with pytest.raises(AttributeError):
        p.anchor = anchor(tfs=1.0)
    assert pickle.loads(pickle.dumps(p)) == p
    assert hash(p) == hash(PerfSample(anchor(), {"LLC_MISS": 3}))


def test_rank_placement_one_rank_per_device():
    cfg = RunConfig("bolt", 3, 2, 50, 2.6e9, 60)
    assert cfg.ranks == 6
    assert [cfg.rank_placement(r) for r in range(6)] == [(0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1)]


def test_run_config_dict_round_trip():
    cfg = RunConfig("bolt", 3, 2, 50, 2.6e9, 60)
    assert RunConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        RunConfig.from_dict(dict(cfg.to_dict(), colour="red"))


times = st.floats(-5.0, 5.0, allow_nan=False)
sizes = st.integers(-3, 10**9)


@given(cpu=times, mic=times, to=sizes, frm=sizes)
def test_offload_validation_flags_exactly_broken_rules(cpu, mic, to, frm):
    expected = set()
    if cpu < 0:
        expected.add("cpu_time_s")
    if mic < 0:
        expected.add("mic_time_s")
    if to < 0:
        expected.add("bytes_to_device")
    if frm < 0:
        expected.add("bytes_from_device")
    if cpu > 0 and cpu < mic:
        expected.add("cpu_time_s")
    assert fields_of(validate(OffloadRecord(0, 0, 1, cpu, mic, to, frm))) == expected


@given(vi=st.floats(0.0, 20.0), precision=st.sampled_from(["single", "double"]))
def test_vi_bounds_property(vi, precision):
    hi = 16.0 if precision == "single" else 8.0
    problems = validate(RunConfig("x", 1, 1, 50, 2.6e9, 60, vector_intensity=vi, precision=precision))
    assert (fields_of(problems) == {"vector_intensity"}) == (not 1.0 <= vi <= hi)
    assert problems == [] or fields_of(problems) == {"vector_intensity"}


@given(watts=st.lists(st.floats(0, 500, allow_nan=False), min_size=3, max_size=3))
def test_mic_from_parts_always_valid(watts):
    s = MicPowerSample.from_parts(anchor(), *watts)
    assert validate(s) == []
    assert s.total_watts == watts[0] + watts[1] + watts[2]


@given(idle=st.floats(0, 300), active=st.floats(0, 300), ti=st.floats(0, 1e4), ta=st.floats(0, 1e4),
       ni=st.integers(0, 500), na=st.integers(0, 500))
def test_device_state_build_always_valid(idle, active, ti, ta, ni, na):
    r = DeviceStateReport.build(DeviceId("mic", 0, 0), idle, active, ni, na, ti, ta)
    assert validate(r) == []
    assert r.low_samples == (ni < 100 or na < 100)


def test_violation_str():
    assert str(Violation("tfs", "tfs >= 0")) == "tfs: tfs >= 0"
