"""Line grammars for the four artifact streams: parsing and canonical formatting.

Host sampler   ``[HH:MM:SS] <tfs> core=<W> dram=<W> <NAME>=<int> ...``
MIC sampler    ``[HH:MM:SS] <tfs> pcie=<W> c2x3=<W> c2x4=<W> [win0=<W> win1=<W>]``
Offload report ``[<rank>] [Offload] [MIC <dev>] [Tag <n>] [<Field>] <value>(<unit>)``
App output     ``[<rank>] TIMER <name> <seconds>`` and ``[<rank>] EVENT <name> [HH:MM:SS] <tfs>``

Lines starting with ``#`` and blank lines are ignored in sampler logs. App
output and offload reports usually share a terminal with unrelated program
output, so lines that do not carry the TIMER/EVENT or ``[Offload]`` markers
are skipped; lines that do carry them are parsed strictly.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Tuple

from .errors import IncompleteRecordError, MonotonicityError, ParseError
from .model import (
    REQUIRED_TIMERS,
    AppTimeline,
    HostPowerSample,
    MicPowerSample,
    OffloadRecord,
    PerfSample,
    TimeAnchor,
    format_wall,
    validate,
)

_ANCHOR_RE = re.compile(r"^\[(\d\d):(\d\d):(\d\d)\]\s+(\S+)(?:\s+(.*))?$")
_NUMBER_RE = re.compile(r"^\d+(?:\.\d+)?$")
_NAME_RE = re.compile(r"^[^\s=\[\]()]+$")

MIC_CONNECTORS = ("pcie", "c2x3", "c2x4")
MIC_WINDOWS = ("win0", "win1")

OFFLOAD_CPU_TIME = "CPU Time"
OFFLOAD_MIC_TIME = "MIC Time"
OFFLOAD_TO = "CPU->MIC Data"
OFFLOAD_FROM = "MIC->CPU Data"
OFFLOAD_REQUIRED = (OFFLOAD_CPU_TIME, OFFLOAD_MIC_TIME, OFFLOAD_TO, OFFLOAD_FROM)
OFFLOAD_UNITS = {OFFLOAD_CPU_TIME: "seconds", OFFLOAD_MIC_TIME: "seconds",
                 OFFLOAD_TO: "bytes", OFFLOAD_FROM: "bytes"}
COUNTER_UNIT = "count"
_OFFLOAD_RE = re.compile(
    r"^\[(\d+)\]\s+\[Offload\]\s+\[MIC (\d+)\]\s+\[Tag (\d+)\]\s+\[([^\]]+)\]\s+(\S+?)\((\w+)\)\s*$"
)

_APP_RE = re.compile(r"^\[(\d+)\]\s+(TIMER|EVENT)(?:\s+(.*))?$")
_APP_EVENT_RE = re.compile(r"^(\S+)\s+\[(\d\d):(\d\d):(\d\d)\]\s+(\S+)\s*$")
_APP_TIMER_RE = re.compile(r"^(\S+)\s+(\S+)\s*$")


# -- formatting ------------------------------------------------------------

def format_tfs(tfs: float) -> str:
    return f"{tfs:.3f}"


def format_watts(watts: float) -> str:
    # shortest round-trip repr keeps parse(format(x)) == x
    return repr(float(watts))


def format_anchor(anchor: TimeAnchor) -> str:
    return f"[{format_wall(anchor.wall_clock)}] {format_tfs(anchor.tfs)}"


def format_host_line(power: HostPowerSample, perf: PerfSample | None = None) -> str:
    parts = [format_anchor(power.anchor),
             f"core={format_watts(power.core_watts)}",
             f"dram={format_watts(power.dram_watts)}"]
    if perf is not None:
        parts.extend(f"{name}={value:d}" for name, value in perf.counters.items())
    return " ".join(parts)


def format_mic_line(sample: MicPowerSample) -> str:
    parts = [format_anchor(sample.anchor),
             f"pcie={format_watts(sample.pcie_watts)}",
             f"c2x3={format_watts(sample.c2x3_watts)}",
             f"c2x4={format_watts(sample.c2x4_watts)}"]
    parts.extend(f"{name}={format_watts(w)}" for name, w in zip(MIC_WINDOWS, sample.window_watts))
    return " ".join(parts)


def format_offload_lines(record: OffloadRecord) -> List[str]:
    head = f"[{record.rank}] [Offload] [MIC {record.device_id}] [Tag {record.tag}]"
    lines = [
        f"{head} [{OFFLOAD_CPU_TIME}] {record.cpu_time_s:.6f}(seconds)",
        f"{head} [{OFFLOAD_MIC_TIME}] {record.mic_time_s:.6f}(seconds)",
        f"{head} [{OFFLOAD_TO}] {record.bytes_to_device:d}(bytes)",
        f"{head} [{OFFLOAD_FROM}] {record.bytes_from_device:d}(bytes)",
    ]
    lines.extend(f"{head} [Counter {name}] {value:d}({COUNTER_UNIT})"
                 for name, value in record.counters.items())
    return lines


def format_offload_report(records: Iterable[OffloadRecord]) -> List[str]:
    out = []
    for record in sorted(records, key=lambda r: (r.rank, r.tag)):
        out.extend(format_offload_lines(record))
    return out


def format_timer_line(rank: int, name: str, seconds: float) -> str:
    return f"[{rank}] TIMER {name} {seconds:.6f}"


def format_event_line(rank: int, name: str, anchor: TimeAnchor) -> str:
    return f"[{rank}] EVENT {name} {format_anchor(anchor)}"


def format_app_output(timelines: Mapping[int, AppTimeline]) -> List[str]:
    out = []
    for rank in sorted(timelines):
        tl = timelines[rank]
        out.extend(format_event_line(rank, name, a) for name, a in tl.event_anchors)
        out.extend(format_timer_line(rank, name, s) for name, s in tl.named_timers.items())
    return out


# -- helpers ---------------------------------------------------------------

def _lines(stream):
    for no, raw in enumerate(stream, start=1):
        yield no, raw.rstrip("\r\n")


def _anchor(hh, mm, ss, tfs_text, line_no):
    h, m, s = int(hh), int(mm), int(ss)
    if h > 23 or m > 59 or s > 59:
        raise ParseError("invalid wall clock", line_no, f"{hh}:{mm}:{ss}")
    if not _NUMBER_RE.match(tfs_text):
        raise ParseError("invalid time-from-start", line_no, tfs_text)
    return TimeAnchor(h * 3600 + m * 60 + s, round(float(tfs_text), 3))


def _float(text, line_no, name):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"invalid value for {name}", line_no, text) from None
    if value != value:
        raise ParseError(f"invalid value for {name}", line_no, text)
    return value


def _int(text, line_no, name):
    if not text.isdigit():
        raise ParseError(f"invalid count for {name}", line_no, text)
    return int(text)


def _key_values(rest, line_no):
    pairs = []
    seen = set()
    for token in (rest or "").split():
        name, eq, value = token.partition("=")
        if not eq or not name or not value or not _NAME_RE.match(name):
            raise ParseError("malformed field", line_no, token)
        if name in seen:
            raise ParseError(f"duplicate field {name}", line_no, token)
        seen.add(name)
        pairs.append((name, value))
    return pairs


def _check_order(prev, cur, prev_no, line_no):
    if prev is not None and not cur.tfs > prev.tfs:
        raise MonotonicityError(
            f"non-monotonic tfs: {format_anchor(prev)} (line {prev_no}) then {format_anchor(cur)}",
            line_no, format_tfs(cur.tfs))


def _require_valid(value, line_no):
    problems = validate(value)
    if problems:
        raise ParseError("; ".join(str(p) for p in problems), line_no)
    return value


# -- sampler logs ----------------------------------------------------------

def parse_host_sampler(stream: Iterable[str]) -> List[Tuple[HostPowerSample, PerfSample]]:
    """Host sampler log -> one (power, perf) pair per sample line."""
    out = []
    prev = prev_no = None
    for no, line in _lines(stream):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        m = _ANCHOR_RE.match(line)
        if m is None:
            raise ParseError("malformed host sampler line", no, line.split()[0] if line.split() else line)
        anchor = _anchor(*m.group(1, 2, 3, 4), no)
        core = dram = None
        counters = {}
        for name, value in _key_values(m.group(5), no):
            if name == "core":
                core = _float(value, no, name)
            elif name == "dram":
                dram = _float(value, no, name)
            else:
                counters[name] = _int(value, no, name)
        if core is None:
            raise ParseError("missing field core", no)
        if dram is None:
            raise ParseError("missing field dram", no)
        _check_order(prev, anchor, prev_no, no)
        power = _require_valid(HostPowerSample.from_parts(anchor, core, dram), no)
        out.append((power, PerfSample(anchor, counters)))
        prev, prev_no = anchor, no
    return out


def parse_mic_sampler(stream: Iterable[str]) -> List[MicPowerSample]:
    """MIC sampler log -> samples whose total is the connector sum."""
    out = []
    prev = prev_no = None
    for no, line in _lines(stream):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        m = _ANCHOR_RE.match(line)
        if m is None:
            raise ParseError("malformed MIC sampler line", no, line.split()[0] if line.split() else line)
        anchor = _anchor(*m.group(1, 2, 3, 4), no)
        values = {}
        for name, value in _key_values(m.group(5), no):
            if name not in MIC_CONNECTORS and name not in MIC_WINDOWS:
                raise ParseError(f"unknown MIC field {name}", no, name)
            values[name] = _float(value, no, name)
        for name in MIC_CONNECTORS:
            if name not in values:
                raise ParseError(f"missing connector {name}", no)
        windows = tuple(values[w] for w in MIC_WINDOWS if w in values)
        _check_order(prev, anchor, prev_no, no)
        sample = MicPowerSample.from_parts(anchor, values["pcie"], values["c2x3"], values["c2x4"], windows)
        out.append(_require_valid(sample, no))
        prev, prev_no = anchor, no
    return out


# -- offload report --------------------------------------------------------

def parse_offload_report(stream: Iterable[str]) -> List[OffloadRecord]:
    """Rank-interleaved offload report -> one record per (rank, tag), sorted."""
    pending: Dict[Tuple[int, int], dict] = {}
    for no, line in _lines(stream):
        if "[Offload]" not in line:
            continue
        m = _OFFLOAD_RE.match(line.strip())
        if m is None:
            raise ParseError("malformed offload report line", no, line.strip())
        rank, dev, tag = int(m.group(1)), int(m.group(2)), int(m.group(3))
        fld, value, unit = m.group(4), m.group(5), m.group(6)
        entry = pending.setdefault((rank, tag), {"device": dev, "fields": {}, "counters": {}, "line": no})
        if entry["device"] != dev:
            raise ParseError(f"rank {rank} tag {tag} reported on MIC {entry['device']} and MIC {dev}", no)
        if fld.startswith("Counter "):
            name = fld[len("Counter "):].strip()
            if not name or not _NAME_RE.match(name):
                raise ParseError("invalid counter name", no, fld)
            if unit != COUNTER_UNIT:
                raise ParseError(f"unexpected unit for counter {name}", no, unit)
            if name in entry["counters"]:
                raise ParseError(f"duplicate field Counter {name} for rank {rank} tag {tag}", no)
            entry["counters"][name] = _int(value, no, name)
            continue
        if fld not in OFFLOAD_UNITS:
            raise ParseError("unknown offload field", no, fld)
        if unit != OFFLOAD_UNITS[fld]:
            raise ParseError(f"unexpected unit for {fld}", no, unit)
        if fld in entry["fields"]:
            raise ParseError(f"duplicate field {fld} for rank {rank} tag {tag}", no)
        if OFFLOAD_UNITS[fld] == "seconds":
            if not _NUMBER_RE.match(value):
                raise ParseError(f"invalid value for {fld}", no, value)
            entry["fields"][fld] = round(float(value), 6)
        else:
            entry["fields"][fld] = _int(value, no, fld)
    records = []
    missing = []
    for (rank, tag), entry in sorted(pending.items()):
        absent = [f for f in OFFLOAD_REQUIRED if f not in entry["fields"]]
        if absent:
            missing.append(f"rank {rank} tag {tag} missing {', '.join(absent)}")
            continue
        f = entry["fields"]
        record = OffloadRecord(rank, entry["device"], tag, f[OFFLOAD_CPU_TIME], f[OFFLOAD_MIC_TIME],
                               f[OFFLOAD_TO], f[OFFLOAD_FROM], entry["counters"])
        records.append(_require_valid(record, entry["line"]))
    if missing:
        raise IncompleteRecordError("incomplete offload records: " + "; ".join(missing))
    return records


# -- application output ----------------------------------------------------

def parse_app_output(stream: Iterable[str]) -> Dict[int, AppTimeline]:
    """Application TIMER/EVENT lines -> AppTimeline per rank."""
    timers: Dict[int, dict] = {}
    events: Dict[int, list] = {}
    last: Dict[int, tuple] = {}
    for no, line in _lines(stream):
        m = _APP_RE.match(line.strip())
        if m is None:
            continue
        rank, kind, rest = int(m.group(1)), m.group(2), m.group(3) or ""
        if kind == "TIMER":
            t = _APP_TIMER_RE.match(rest)
            if t is None:
                raise ParseError("malformed TIMER line", no, rest)
            name = t.group(1)
            if not _NUMBER_RE.match(t.group(2)):
                raise ParseError(f"invalid seconds for timer {name}", no, t.group(2))
            rank_timers = timers.setdefault(rank, {})
            if name in rank_timers:
                raise ParseError(f"duplicate timer {name} for rank {rank}", no)
            rank_timers[name] = round(float(t.group(2)), 6)
        else:
            e = _APP_EVENT_RE.match(rest)
            if e is None:
                raise ParseError("malformed EVENT line", no, rest)
            anchor = _anchor(*e.group(2, 3, 4, 5), no)
            prev = last.get(rank)
            if prev is not None and anchor.tfs < prev[0].tfs:
                raise MonotonicityError(
                    f"rank {rank} event tfs decreases: {format_anchor(prev[0])} (line {prev[1]}) "
                    f"then {format_anchor(anchor)}", no, format_tfs(anchor.tfs))
            last[rank] = (anchor, no)
            events.setdefault(rank, []).append((e.group(1), anchor))
    out = {}
    for rank in sorted(set(timers) | set(events)):
        rank_timers = timers.get(rank, {})
        for name in REQUIRED_TIMERS:
            if name not in rank_timers:
                raise ParseError(f"rank {rank} missing timer {name}")
        timeline = AppTimeline(rank, rank_timers, events.get(rank, ()))
        problems = validate(timeline)
        if problems:
            raise ParseError(f"rank {rank}: " + "; ".join(str(p) for p in problems))
        out[rank] = timeline
    return out


# -- whole run directories -------------------------------------------------

@dataclass
class ParsedRun:
    host_power: Dict[int, List[HostPowerSample]] = field(default_factory=dict)
    host_perf: Dict[int, List[PerfSample]] = field(default_factory=dict)
    mic_power: Dict[Tuple[int, int], List[MicPowerSample]] = field(default_factory=dict)
    offloads: List[OffloadRecord] = field(default_factory=list)
    app: Dict[int, AppTimeline] = field(default_factory=dict)

    def streams(self):
        """stream id -> anchors of every sampler stream."""
        out = {}
        for node, samples in sorted(self.host_power.items()):
            out[f"host-{node}"] = [s.anchor for s in samples]
        for (node, dev), samples in sorted(self.mic_power.items()):
            out[f"mic-{node}-{dev}"] = [s.anchor for s in samples]
        return out


APP_FILE = "app.out"
OFFLOAD_FILE = "offload.rpt"
_HOST_FILE_RE = re.compile(r"^host-(\d+)\.log$")
_MIC_FILE_RE = re.compile(r"^mic-(\d+)-(\d+)\.log$")


def _parse_named(name: str, lines, parser):
    try:
        return parser(lines)
    except ParseError as exc:
        raise exc.with_source(name)


def parse_artifacts(texts: Mapping[str, Iterable[str]]) -> ParsedRun:
    """ParsedRun from artifact name -> lines (or text); names follow the run directory layout."""
    host = {}
    mic = {}
    for name in sorted(texts):
        if (m := _HOST_FILE_RE.match(name)):
            host[int(m.group(1))] = name
        elif (m := _MIC_FILE_RE.match(name)):
            mic[(int(m.group(1)), int(m.group(2)))] = name
    for name in (APP_FILE, OFFLOAD_FILE):
        if name not in texts:
            raise ParseError("missing artifact file", source=name)
    if not host:
        raise ParseError("no host sampler logs (host-<node>.log)")

    def lines(name):
        data = texts[name]
        return data.splitlines() if isinstance(data, str) else data

    run = ParsedRun()
    for node, name in host.items():
        pairs = _parse_named(name, lines(name), parse_host_sampler)
        run.host_power[node] = [p for p, _ in pairs]
        run.host_perf[node] = [q for _, q in pairs]
    for key, name in mic.items():
        run.mic_power[key] = _parse_named(name, lines(name), parse_mic_sampler)
    run.offloads = _parse_named(OFFLOAD_FILE, lines(OFFLOAD_FILE), parse_offload_report)
    run.app = _parse_named(APP_FILE, lines(APP_FILE), parse_app_output)
    if not run.app:
        raise ParseError("no TIMER/EVENT lines found", source=APP_FILE)
    return run


def parse_run_dir(run_dir) -> ParsedRun:
    """Parse every artifact of a run directory; errors name the file and line."""
    run_dir = Path(run_dir)
    names = [p.name for p in sorted(run_dir.iterdir())
             if _HOST_FILE_RE.match(p.name) or _MIC_FILE_RE.match(p.name) or p.name in (APP_FILE, OFFLOAD_FILE)]
    texts = {}
    for name in names:
        with open(run_dir / name, encoding="utf-8") as fh:
            texts[name] = fh.read()
    return parse_artifacts(texts)
