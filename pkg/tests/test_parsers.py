import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phiprof.errors import IncompleteRecordError, MonotonicityError, ParseError
from phiprof.model import validate_stream
from phiprof.parsers import (
    format_app_output, format_host_line, format_mic_line, format_offload_report, parse_app_output,
    parse_artifacts, parse_host_sampler, parse_mic_sampler, parse_offload_report, parse_run_dir,
)

from strategies import app_timelines, artifact_sets, host_logs, interleave, mic_logs, offload_records

TIMERS = dict(position=10.0, velocity=5.0, redistribute=30.0, force=70.0, halo_exchange=8.2,
              reduce=1.1, inner_transfer=12.0, loop=120.5)


def app_lines(rank, timers=TIMERS, events=(("start", "[13:05:02] 0.512"),)):
    out = [f"[{rank}] EVENT {name} {a}" for name, a in events]
    out += [f"[{rank}] TIMER {k} {v:.6f}" for k, v in timers.items()]
    return out


def offload_block(rank, tag, cpu="0.120000", mic="0.090000", dev=0):
    head = f"[{rank}] [Offload] [MIC {dev}] [Tag {tag}]"
    return [f"{head} [CPU Time] {cpu}(seconds)", f"{head} [MIC Time] {mic}(seconds)",
            f"{head} [CPU->MIC Data] 1000(bytes)", f"{head} [MIC->CPU Data] 500(bytes)"]


# -- host sampler ----------------------------------------------------------

def test_host_line_fields_and_total():
    [(power, perf)] = parse_host_sampler(
        ["[13:05:02] 12.340 core=35.10 dram=8.20 LLC_MISS=120000 UNHALTED=26000000"])
    assert power.anchor.wall_clock == 13 * 3600 + 5 * 60 + 2
    assert power.anchor.tfs == 12.34
    assert power.total_watts == pytest.approx(43.30)
    assert dict(perf.counters) == {"LLC_MISS": 120000, "UNHALTED": 26000000}


def test_empty_stream_gives_no_samples():
    assert parse_host_sampler([]) == []
    assert parse_mic_sampler(["# header only", ""]) == []


def test_decreasing_tfs_is_a_monotonicity_error():
    lines = ["[13:05:02] 5.000 core=1 dram=1", "[13:05:02] 4.990 core=1 dram=1"]
    with pytest.raises(MonotonicityError) as err:
        parse_host_sampler(lines)
    assert err.value.line_no == 2


def test_malformed_host_lines():
    with pytest.raises(ParseError, match="missing field dram"):
        parse_host_sampler(["[13:05:02] 1.000 core=3"])
    with pytest.raises(ParseError) as err:
        parse_host_sampler(["[13:05:02] 1.000 core=3 dram=2", "13:05:03 2.000 core=3 dram=2"])
    assert err.value.line_no == 2
    with pytest.raises(ParseError):
        parse_host_sampler(["[13:05:02] 1.000 core=abc dram=2"])


# -- MIC sampler -----------------------------------------------------------

def test_mic_total_is_connector_sum():
    [s] = parse_mic_sampler(["[13:05:02] 1.000 pcie=61.0 c2x3=55.5 c2x4=48.5"])
    assert s.total_watts == 165.0
    assert s.window_watts == ()


def test_mic_missing_connector():
    with pytest.raises(ParseError, match="missing connector pcie"):
        parse_mic_sampler(["[13:05:02] 1.000 c2x3=55.5 c2x4=48.5"])


def test_mic_fifty_ms_log_spans_ten_seconds():
    lines = [f"[13:05:{2 + (i * 50) // 1000:02d}] {i * 0.05:.3f} pcie=1 c2x3=1 c2x4=1" for i in range(200)]
    samples = parse_mic_sampler(lines)
    assert len(samples) == 200
    assert samples[-1].anchor.tfs - samples[0].anchor.tfs == pytest.approx(9.95)


# -- offload report --------------------------------------------------------

def test_interleaved_tags_give_one_record_each():
    a, b = offload_block(0, 1), offload_block(0, 2, cpu="0.000000")
    lines = [x for pair in zip(a, b) for x in pair]
    records = parse_offload_report(lines)
    assert [(r.rank, r.tag) for r in records] == [(0, 1), (0, 2)]
    assert records[1].cpu_time_s == 0.0
    assert not records[1].cpu_time_defined
    assert records[0].bytes_to_device == 1000


def test_same_tag_on_two_ranks_gives_two_records():
    lines = [x for pair in zip(offload_block(0, 5), offload_block(1, 5, dev=1)) for x in pair]
    records = parse_offload_report(lines)
    assert [(r.rank, r.device_id, r.tag) for r in records] == [(0, 0, 5), (1, 1, 5)]
    assert parse_offload_report([]) == []


def test_duplicate_offload_field():
    with pytest.raises(ParseError, match="duplicate field CPU Time"):
        parse_offload_report(offload_block(0, 5) + offload_block(0, 5)[:1])


def test_incomplete_offload_record():
    with pytest.raises(IncompleteRecordError, match="rank 0 tag 3 missing MIC Time"):
        parse_offload_report([offload_block(0, 3)[0]] + offload_block(0, 3)[2:])


def test_offload_unknown_field_and_bad_unit():
    with pytest.raises(ParseError, match="unknown offload field"):
        parse_offload_report(["[0] [Offload] [MIC 0] [Tag 1] [Wait Time] 0.1(seconds)"])
    with pytest.raises(ParseError, match="unexpected unit"):
        parse_offload_report(["[0] [Offload] [MIC 0] [Tag 1] [CPU Time] 0.1(bytes)"])


def test_offload_non_report_lines_ignored():
    lines = ["some banner", *offload_block(1, 4), "[1] TIMER loop 3.0"]
    assert len(parse_offload_report(lines)) == 1


# -- application output ----------------------------------------------------

def test_app_timers_and_events():
    app = parse_app_output(["noise"] + app_lines(0))
    assert app[0].timer("loop") == 120.5
    assert app[0].events("start")[0].tfs == 0.512


def test_app_missing_timer():
    timers = {k: v for k, v in TIMERS.items() if k != "reduce"}
    with pytest.raises(ParseError, match="rank 0 missing timer reduce"):
        parse_app_output(app_lines(0, timers))


def test_app_two_ranks_interleaved():
    lines = [x for pair in zip(app_lines(0), app_lines(1)) for x in pair]
    app = parse_app_output(lines)
    assert sorted(app) == [0, 1]
    assert app[1].named_timers == app[0].named_timers


def test_app_event_tfs_must_not_decrease():
    events = (("a", "[13:05:02] 1.000"), ("b", "[13:05:02] 0.900"))
    with pytest.raises(MonotonicityError):
        parse_app_output(app_lines(0, events=events))


# -- whole runs ------------------------------------------------------------

def test_parse_run_dir(run_dir, default_run):
    parsed = parse_run_dir(run_dir)
    assert sorted(parsed.host_power) == [0]
    assert sorted(parsed.mic_power) == [(0, 0)]
    assert set(parsed.app) == set(range(default_run.config.ranks))
    assert parsed.offloads


def test_missing_artifact_is_named(default_run):
    texts = dict(default_run.files)
    del texts["offload.rpt"]
    with pytest.raises(ParseError, match="offload.rpt"):
        parse_artifacts(texts)


def test_parse_error_names_file(default_run):
    texts = dict(default_run.files)
    texts["host-0.log"] = "[13:05:02] 1.000 core=x dram=1\n"
    with pytest.raises(ParseError, match="host-0.log:line 1"):
        parse_artifacts(texts)


# -- round trip and interleaving ------------------------------------------

@given(host_logs())
def test_host_round_trip(pairs):
    lines = [format_host_line(p, q) for p, q in pairs]
    assert parse_host_sampler(lines) == pairs


@given(mic_logs())
def test_mic_round_trip(samples):
    lines = [format_mic_line(s) for s in samples]
    assert parse_mic_sampler(lines) == samples


@given(offload_records())
def test_offload_round_trip(records):
    parsed = parse_offload_report(format_offload_report(records))
    assert parsed == sorted(records, key=lambda r: (r.rank, r.tag))


@given(app_timelines())
def test_app_round_trip(app):
    assert parse_app_output(format_app_output(app)) == app


@given(artifact_sets())
def test_canonical_text_is_a_fixed_point(art):
    assert [format_host_line(p, q) for p, q in parse_host_sampler(art["host"])] == art["host"]
    assert [format_mic_line(s) for s in parse_mic_sampler(art["mic"])] == art["mic"]
    assert format_offload_report(parse_offload_report(art["offload"])) == art["offload"]
    assert format_app_output(parse_app_output(art["app"])) == art["app"]


@settings(max_examples=200)
@given(records=offload_records(), app=app_timelines(), seed=st.integers(0, 2**32))
def test_rank_interleaving_does_not_change_result(records, app, seed):
    rnd = random.Random(seed)
    by_rank = {}
    for r in records:
        by_rank.setdefault(r.rank, []).extend(format_offload_report([r]))
    shuffled = interleave(by_rank.values(), rnd)
    assert parse_offload_report(shuffled) == parse_offload_report(format_offload_report(records))

    per_rank = [format_app_output({k: v}) for k, v in app.items()]
    assert parse_app_output(interleave(per_rank, rnd)) == app


@given(host_logs(), mic_logs())
def test_parsed_streams_are_consistent(pairs, samples):
    host = parse_host_sampler([format_host_line(p, q) for p, q in pairs])
    mic = parse_mic_sampler([format_mic_line(s) for s in samples])
    assert validate_stream([p.anchor for p, _ in host]) == []
    assert validate_stream([s.anchor for s in mic]) == []
