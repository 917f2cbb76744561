"""Single-threaded samplers that write host and MIC power logs.

A sampler emits one line per period in the shared line grammar, each with
a fresh anchor: local wall clock (whole seconds) plus TFS since the sampler
started. Lines are flushed as written so a killed sampler leaves a usable
log. Replay samplers re-emit the values of a recorded log on schedule; the
live host sampler differences the powercap energy counters.
"""
from __future__ import annotations

import ctypes
import logging
import os
import platform
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Tuple

from .errors import ParseError, SamplerStartupError
from .model import HostPowerSample, MicPowerSample, PerfSample, TimeAnchor, Violation
from .parsers import format_host_line, format_mic_line, parse_host_sampler, parse_mic_sampler

log = logging.getLogger(__name__)

HOST_LIVE = "host_live"
HOST_REPLAY = "host_replay"
MIC_REPLAY = "mic_replay"
KINDS = (HOST_LIVE, HOST_REPLAY, MIC_REPLAY)

DEFAULT_PERIOD_S = {HOST_LIVE: 0.010, HOST_REPLAY: 0.010, MIC_REPLAY: 0.050}
MIN_PERIOD_S = 0.001
# the device power file refreshes every 50 ms; faster polling only repeats values
MIC_MIN_PERIOD_S = 0.050
PERIOD_ENV = "PHIPROF_SAMPLER_PERIOD_MS"
POWERCAP_ROOT = "/sys/class/powercap"


@dataclass
class SamplerSpec:
    kind: str
    output_path: str
    period_s: Optional[float] = None  # None: per-kind default
    source_path: Optional[str] = None
    counter_names: List[str] = field(default_factory=list)
    powercap_root: str = POWERCAP_ROOT
    label: str = ""  # free text for the header line

    def resolved_period(self, env=None) -> float:
        """Period in seconds: the environment override wins, then ``period_s``, then the kind default."""
        env = os.environ if env is None else env
        raw = env.get(PERIOD_ENV)
        if raw:
            try:
                return float(raw) / 1000.0
            except ValueError:
                raise SamplerStartupError(f"{PERIOD_ENV}={raw!r} is not a number") from None
        if self.period_s is not None:
            return self.period_s
        return DEFAULT_PERIOD_S.get(self.kind, 0.010)

    def violations(self, env=None) -> List[Violation]:
        out = []
        if self.kind not in KINDS:
            out.append(Violation("kind", f"kind in {{{', '.join(KINDS)}}}"))
        period = self.resolved_period(env)
        if not period >= MIN_PERIOD_S:
            out.append(Violation("period_s", f"period >= {MIN_PERIOD_S * 1000:g} ms"))
        if self.kind == MIC_REPLAY and period < MIC_MIN_PERIOD_S:
            out.append(Violation("period_s", f"MIC period >= {MIC_MIN_PERIOD_S * 1000:g} ms"))
        if self.kind in (HOST_REPLAY, MIC_REPLAY) and not self.source_path:
            out.append(Violation("source_path", "replay needs a source file"))
        return out


def wall_seconds(now: Optional[float] = None) -> int:
    """Local time of day in whole seconds."""
    t = time.localtime(time.time() if now is None else now)
    return t.tm_hour * 3600 + t.tm_min * 60 + t.tm_sec


# -- powercap energy counters ----------------------------------------------

@dataclass
class EnergyZone:
    path: Path
    max_range_uj: int
    last_uj: int = 0

    def read_uj(self) -> int:
        return int((self.path / "energy_uj").read_text().strip())

    def delta_j(self) -> float:
        now = self.read_uj()
        # the counter wraps at max_energy_range_uj
        delta = (now - self.last_uj) % (self.max_range_uj + 1)
        self.last_uj = now
        return delta / 1e6


def _zone_name(path: Path) -> str:
    try:
        return (path / "name").read_text().strip()
    except OSError:
        return ""


def _open_zone(path: Path) -> EnergyZone:
    try:
        zone = EnergyZone(path, int((path / "max_energy_range_uj").read_text().strip()))
        zone.last_uj = zone.read_uj()
    except (OSError, ValueError) as exc:
        raise SamplerStartupError(f"energy counter {path} unreadable: {exc}") from None
    return zone


class RaplReader:
    """Package-aggregate core (or package) and DRAM energy over the powercap tree."""

    def __init__(self, root=POWERCAP_ROOT):
        root = Path(root)
        packages = sorted(p for p in root.glob("intel-rapl:*")
                          if p.name.count(":") == 1 and _zone_name(p).startswith("package"))
        if not packages:
            raise SamplerStartupError(f"no RAPL package domains under {root}")
        self.core: List[EnergyZone] = []
        self.dram: List[EnergyZone] = []
        self.core_domain = "core"
        for pkg in packages:
            subs = {_zone_name(s): s for s in sorted(pkg.glob(f"{pkg.name}:*"))}
            if "core" not in subs:
                # core subzone is missing on some parts; fall back to the whole package
                self.core_domain = "package"
            self.core.append(_open_zone(subs.get("core", pkg)))
            if "dram" in subs:
                self.dram.append(_open_zone(subs["dram"]))
            else:
                # server parts often expose DRAM as a top-level zone
                top = [p for p in root.glob("intel-rapl:*") if _zone_name(p) == "dram"]
                self.dram.extend(_open_zone(p) for p in top if p not in {z.path for z in self.dram})
        if not self.dram:
            raise SamplerStartupError(f"no DRAM energy domain under {root}")

    def read(self, dt: float) -> Tuple[float, float]:
        """(core W, dram W) averaged over the ``dt`` seconds since the previous read."""
        core = sum(z.delta_j() for z in self.core)
        dram = sum(z.delta_j() for z in self.dram)
        return core / dt, dram / dt


# -- perf_event counters ---------------------------------------------------

class _PerfEventAttr(ctypes.Structure):
    _fields_ = [("type", ctypes.c_uint32), ("size", ctypes.c_uint32), ("config", ctypes.c_uint64),
                ("sample_period", ctypes.c_uint64), ("sample_type", ctypes.c_uint64),
                ("read_format", ctypes.c_uint64), ("flags", ctypes.c_uint64),
                ("wakeup_events", ctypes.c_uint32), ("bp_type", ctypes.c_uint32),
                ("config1", ctypes.c_uint64)]


PERF_TYPE_HARDWARE = 0
PERF_TYPE_RAW = 4
GENERIC_EVENTS = {"cycles": 0, "instructions": 1, "cache-references": 2, "cache-misses": 3}
_PERF_SYSCALL = {"x86_64": 298, "aarch64": 241}


def _event_code(name: str) -> Tuple[str, int, int]:
    """'cycles' or 'NAME=0xRAW' -> (label, perf type, config)."""
    label, eq, raw = name.partition("=")
    if eq:
        try:
            return label, PERF_TYPE_RAW, int(raw, 0)
        except ValueError:
            raise SamplerStartupError(f"bad raw event code in {name!r}") from None
    if name in GENERIC_EVENTS:
        return name, PERF_TYPE_HARDWARE, GENERIC_EVENTS[name]
    raise SamplerStartupError(f"unknown counter {name!r}; use a generic name or NAME=0xCODE")


class PerfEventCounters:
    """System-wide counters summed over every CPU (package aggregate), read as deltas."""

    def __init__(self, names: List[str]):
        nr = _PERF_SYSCALL.get(platform.machine())
        if nr is None:
            raise SamplerStartupError(f"perf_event_open unsupported on {platform.machine()}")
        libc = ctypes.CDLL(None, use_errno=True)
        self.fds: Dict[str, List[int]] = {}
        self.last: Dict[str, int] = {}
        try:
            for name in names:
                label, kind, config = _event_code(name)
                attr = _PerfEventAttr(type=kind, size=ctypes.sizeof(_PerfEventAttr), config=config)
                fds = []
                for cpu in range(os.cpu_count() or 1):
                    fd = libc.syscall(nr, ctypes.byref(attr), -1, cpu, -1, 0)
                    if fd < 0:
                        err = ctypes.get_errno()
                        raise SamplerStartupError(f"perf_event_open({label}, cpu {cpu}): {os.strerror(err)}")
                    fds.append(fd)
                self.fds[label] = fds
        except SamplerStartupError:
            self.close()
            raise
        self.last = {label: self._total(label) for label in self.fds}

    def _total(self, label) -> int:
        return sum(int.from_bytes(os.read(fd, 8), "little") for fd in self.fds[label])

    def read(self) -> Dict[str, int]:
        out = {}
        for label in self.fds:
            now = self._total(label)
            out[label] = now - self.last[label]
            self.last[label] = now
        return out

    def close(self):
        for fds in self.fds.values():
            for fd in fds:
                os.close(fd)
        self.fds = {}


# -- sample sources --------------------------------------------------------

LineFn = Callable[[TimeAnchor, float], str]


def _replay_source(spec: SamplerSpec) -> Tuple[str, Iterator[LineFn]]:
    try:
        with open(spec.source_path, encoding="utf-8") as fh:
            lines = fh.readlines()
        if spec.kind == HOST_REPLAY:
            records = parse_host_sampler(lines)
        else:
            records = parse_mic_sampler(lines)
    except (OSError, ParseError) as exc:
        raise SamplerStartupError(f"replay source {spec.source_path}: {exc}") from None

    def host_lines():
        for power, perf in records:
            yield lambda anchor, _dt, p=power, c=perf.counters: format_host_line(
                HostPowerSample.from_parts(anchor, p.core_watts, p.dram_watts), PerfSample(anchor, c))

    def mic_lines():
        for s in records:
            yield lambda anchor, _dt, s=s: format_mic_line(
                MicPowerSample.from_parts(anchor, s.pcie_watts, s.c2x3_watts, s.c2x4_watts, s.window_watts))

    header = f"replay source={Path(spec.source_path).name}"
    return header, host_lines() if spec.kind == HOST_REPLAY else mic_lines()


def _live_source(spec: SamplerSpec):
    rapl = RaplReader(spec.powercap_root)
    perf = PerfEventCounters(spec.counter_names) if spec.counter_names else None

    def lines():
        while True:
            def render(anchor, dt):
                core, dram = rapl.read(dt)
                counters = perf.read() if perf else {}
                return format_host_line(HostPowerSample.from_parts(anchor, round(core, 3), round(dram, 3)),
                                        PerfSample(anchor, counters))
            yield render

    header = f"live core_domain={rapl.core_domain} counters=package-aggregate"
    return header, lines(), (perf.close if perf else None)


# -- the sampling loop -----------------------------------------------------

def run_sampler(spec: SamplerSpec, stop: threading.Event, clock=time.monotonic) -> int:
    """Sample until ``stop`` is set or a replay source runs out; returns lines written."""
    problems = spec.violations()
    if problems:
        raise SamplerStartupError("; ".join(str(p) for p in problems))
    period = spec.resolved_period()
    cleanup = None
    if spec.kind == HOST_LIVE:
        header, source, cleanup = _live_source(spec)
    else:
        header, source = _replay_source(spec)
    try:
        out = open(spec.output_path, "w", encoding="utf-8")
    except OSError as exc:
        if cleanup:
            cleanup()
        raise SamplerStartupError(f"cannot write {spec.output_path}: {exc}") from None

    written = 0
    with out:
        words = ["#", spec.kind, spec.label, f"period_ms={period * 1000:g}", header]
        out.write(" ".join(w for w in words if w) + "\n")
        out.flush()
        start = prev = clock()
        deadline = start + period
        try:
            for render in source:
                if stop.wait(max(0.0, deadline - clock())):
                    break
                now = clock()
                anchor = TimeAnchor(wall_seconds(), round(now - start, 3))
                out.write(render(anchor, now - prev) + "\n")
                out.flush()
                written += 1
                prev = now
                deadline += period
                if deadline < now:
                    # fell more than a period behind; resume the cadence from now
                    deadline = now + period
        finally:
            if cleanup:
                cleanup()
    log.debug("%s sampler wrote %d lines to %s", spec.kind, written, spec.output_path)
    return written


class SamplerThread:
    """A sampler running in a daemon thread, stopped through its event."""

    def __init__(self, spec: SamplerSpec):
        self.spec = spec
        self.stop_event = threading.Event()
        self.lines = 0
        self.error: Optional[BaseException] = None
        self.thread = threading.Thread(target=self._run, name=f"sampler-{spec.kind}", daemon=True)

    def _run(self):
        try:
            self.lines = run_sampler(self.spec, self.stop_event)
        except BaseException as exc:  # reported by stop()
            self.error = exc

    def start(self) -> "SamplerThread":
        self.thread.start()
        return self

    def alive(self) -> bool:
        return self.thread.is_alive()

    def stop(self, timeout: float = 5.0) -> int:
        self.stop_event.set()
        self.thread.join(timeout)
        if self.thread.is_alive():
            raise RuntimeError(f"sampler {self.spec.output_path} did not stop within {timeout} s")
        if self.error is not None:
            raise self.error
        return self.lines
