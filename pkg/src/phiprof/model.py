"""Domain types shared by the parsers, profilers and the orchestrator.

Values are frozen dataclasses. Construction is permissive so that a bad
record can still be inspected; :func:`validate` reports every violated
invariant and :func:`ensure_valid` turns violations into an exception.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Iterable, Mapping, Optional, Sequence

from .errors import ValidationError

SECONDS_PER_DAY = 86400
WALL_CLOCK_RESOLUTION_S = 1.0

REQUIRED_TIMERS = (
    "position",
    "velocity",
    "redistribute",
    "force",
    "halo_exchange",
    "reduce",
    "inner_transfer",
    "loop",
)

VI_BOUNDS = {"single": (1.0, 16.0), "double": (1.0, 8.0)}


class FrozenMap(dict):
    """Read-only dict; keeps insertion order, hashable and picklable."""

    def _readonly(self, *args, **kwargs):
        raise TypeError("FrozenMap is immutable")

    __setitem__ = __delitem__ = clear = pop = popitem = setdefault = update = _readonly

    def __hash__(self):
        return hash(tuple(self.items()))

    def __reduce__(self):
        return (FrozenMap, (dict(self),))

    def __copy__(self):
        return self

    def __deepcopy__(self, memo):
        return self


def _freeze(obj, name, value):
    if not isinstance(value, FrozenMap):
        object.__setattr__(obj, name, FrozenMap(value or {}))


@dataclass(frozen=True)
class Violation:
    field: str
    rule: str

    def __str__(self):
        return f"{self.field}: {self.rule}"


# -- wall clock helpers ----------------------------------------------------

def parse_wall(text: str) -> int:
    """'HH:MM:SS' -> seconds of day."""
    hh, mm, ss = text.split(":")
    h, m, s = int(hh), int(mm), int(ss)
    if not (0 <= h < 24 and 0 <= m < 60 and 0 <= s < 60):
        raise ValueError(f"invalid time of day {text!r}")
    return h * 3600 + m * 60 + s


def format_wall(seconds_of_day: int) -> str:
    s = int(seconds_of_day) % SECONDS_PER_DAY
    return f"{s // 3600:02d}:{s % 3600 // 60:02d}:{s % 60:02d}"


def wall_delta(later: int, earlier: int) -> int:
    """Signed difference of two times of day, taken mod 24h into [-12h, 12h)."""
    d = (later - earlier) % SECONDS_PER_DAY
    if d >= SECONDS_PER_DAY // 2:
        d -= SECONDS_PER_DAY
    return d


# -- samples ---------------------------------------------------------------

@dataclass(frozen=True)
class TimeAnchor:
    wall_clock: int  # seconds of day, 1 s resolution
    tfs: float  # seconds since stream start

    @property
    def hms(self) -> str:
        return format_wall(self.wall_clock)

    def violations(self):
        out = []
        if not 0 <= self.wall_clock < SECONDS_PER_DAY:
            out.append(Violation("wall_clock", "0 <= wall_clock < 24h"))
        if not self.tfs >= 0:
            out.append(Violation("tfs", "tfs >= 0"))
        return out


@dataclass(frozen=True)
class HostPowerSample:
    anchor: TimeAnchor
    core_watts: float
    dram_watts: float
    total_watts: float

    @classmethod
    def from_parts(cls, anchor, core_watts, dram_watts):
        return cls(anchor, core_watts, dram_watts, core_watts + dram_watts)

    def violations(self):
        out = self.anchor.violations()
        if not self.core_watts >= 0:
            out.append(Violation("core_watts", "core_watts >= 0"))
        if not self.dram_watts >= 0:
            out.append(Violation("dram_watts", "dram_watts >= 0"))
        if self.total_watts != self.core_watts + self.dram_watts:
            out.append(Violation("total_watts", "total = core + dram"))
        return out


@dataclass(frozen=True)
class MicPowerSample:
    anchor: TimeAnchor
    pcie_watts: float
    c2x3_watts: float
    c2x4_watts: float
    total_watts: float
    # window-averaged power as printed by the power file; stored, never used
    window_watts: tuple = ()

    @classmethod
    def from_parts(cls, anchor, pcie_watts, c2x3_watts, c2x4_watts, window_watts=()):
        total = pcie_watts + c2x3_watts + c2x4_watts
        return cls(anchor, pcie_watts, c2x3_watts, c2x4_watts, total, tuple(window_watts))

    def violations(self):
        out = self.anchor.violations()
        for name in ("pcie_watts", "c2x3_watts", "c2x4_watts"):
            if not getattr(self, name) >= 0:
                out.append(Violation(name, f"{name} >= 0"))
        if self.total_watts != self.pcie_watts + self.c2x3_watts + self.c2x4_watts:
            out.append(Violation("total_watts", "total = pcie + c2x3 + c2x4"))
        return out


@dataclass(frozen=True)
class PerfSample:
    anchor: TimeAnchor
    counters: Mapping[str, int] = field(default_factory=FrozenMap)

    def __post_init__(self):
        _freeze(self, "counters", self.counters)

    def violations(self):
        out = self.anchor.violations()
        for name, value in self.counters.items():
            if not isinstance(value, int) or value < 0:
                out.append(Violation(f"counters[{name}]", "delta count is a non-negative integer"))
        return out


@dataclass(frozen=True)
class OffloadRecord:
    rank: int
    device_id: int
    tag: int
    cpu_time_s: float  # 0.0 means the runtime did not report it
    mic_time_s: float
    bytes_to_device: int
    bytes_from_device: int
    counters: Mapping[str, int] = field(default_factory=FrozenMap)

    def __post_init__(self):
        _freeze(self, "counters", self.counters)

    @property
    def cpu_time_defined(self) -> bool:
        return self.cpu_time_s > 0

    @property
    def bytes_total(self) -> int:
        return self.bytes_to_device + self.bytes_from_device

    def violations(self):
        out = []
        for name in ("rank", "device_id", "tag"):
            if not getattr(self, name) >= 0:
                out.append(Violation(name, f"{name} >= 0"))
        for name in ("cpu_time_s", "mic_time_s", "bytes_to_device", "bytes_from_device"):
            if not getattr(self, name) >= 0:
                out.append(Violation(name, f"{name} >= 0"))
        if self.cpu_time_s > 0 and self.cpu_time_s < self.mic_time_s:
            out.append(Violation("cpu_time_s", "cpu_time >= mic_time when defined"))
        for name, value in self.counters.items():
            if not isinstance(value, int) or value < 0:
                out.append(Violation(f"counters[{name}]", "counter total is a non-negative integer"))
        return out


@dataclass(frozen=True)
class AppTimeline:
    rank: int
    named_timers: Mapping[str, float]
    event_anchors: tuple = ()  # (event name, TimeAnchor) pairs in output order

    def __post_init__(self):
        _freeze(self, "named_timers", self.named_timers)
        object.__setattr__(self, "event_anchors", tuple(self.event_anchors))

    def timer(self, name: str) -> float:
        return self.named_timers[name]

    def events(self, name: str):
        return [a for n, a in self.event_anchors if n == name]

    def violations(self):
        out = []
        for name in REQUIRED_TIMERS:
            if name not in self.named_timers:
                out.append(Violation(f"named_timers[{name}]", "required timer present"))
        for name, value in self.named_timers.items():
            if not value >= 0:
                out.append(Violation(f"named_timers[{name}]", "timer >= 0"))
        loop = self.named_timers.get("loop")
        if loop is not None:
            for name in REQUIRED_TIMERS:
                value = self.named_timers.get(name)
                if name != "loop" and value is not None and value > loop:
                    out.append(Violation(f"named_timers[{name}]", "loop >= constituent timer"))
        for _, anchor in self.event_anchors:
            out.extend(anchor.violations())
        return out


# -- configuration and derived values --------------------------------------

@dataclass(frozen=True)
class RunConfig:
    system_name: str
    nodes: int
    mics_per_node: int
    problem_size: int
    host_frequency_hz: float
    mic_cores: int
    mic_frequency_hz: float = 1.1e9
    vector_intensity: float = 2.6
    ops_per_cycle: float = 1.15
    precision: str = "double"

    @property
    def ranks(self) -> int:
        return self.nodes * max(self.mics_per_node, 1)

    def rank_placement(self, rank: int):
        """(node, device) a rank runs on under one-rank-per-device placement."""
        per_node = max(self.mics_per_node, 1)
        return rank // per_node, (rank % per_node if self.mics_per_node else None)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown RunConfig fields: {sorted(unknown)}")
        return cls(**data)

    def violations(self):
        out = []
        if not (isinstance(self.nodes, int) and self.nodes >= 1):
            out.append(Violation("nodes", "nodes >= 1"))
        if not (isinstance(self.mics_per_node, int) and self.mics_per_node >= 0):
            out.append(Violation("mics_per_node", "mics_per_node >= 0"))
        if not (isinstance(self.problem_size, int) and self.problem_size >= 1):
            out.append(Violation("problem_size", "problem_size >= 1"))
        if not (isinstance(self.mic_cores, int) and self.mic_cores >= 1):
            out.append(Violation("mic_cores", "mic_cores >= 1"))
        for name in ("host_frequency_hz", "mic_frequency_hz", "ops_per_cycle"):
            if not getattr(self, name) > 0:
                out.append(Violation(name, f"{name} > 0"))
        bounds = VI_BOUNDS.get(self.precision)
        if bounds is None:
            out.append(Violation("precision", "precision in {single, double}"))
        else:
            lo, hi = bounds
            if not lo <= self.vector_intensity <= hi:
                out.append(Violation("vector_intensity", f"VI in [{lo:g},{hi:g}] for {self.precision}"))
        return out


PHASE_SLACK = 0.02


@dataclass(frozen=True)
class PhaseTimings:
    host_compute_s: float
    halo_exchange_s: float
    reduce_s: float
    mic_compute_s: float
    pci_transfer_s: float
    loop_total_s: float
    pci_method: str  # "offload_difference" | "residual"

    @property
    def attributed_s(self) -> float:
        return (self.host_compute_s + self.halo_exchange_s + self.reduce_s
                + self.mic_compute_s + self.pci_transfer_s)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def violations(self):
        out = []
        for f in fields(self):
            if f.name != "pci_method" and not getattr(self, f.name) >= 0:
                out.append(Violation(f.name, f"{f.name} >= 0"))
        if self.pci_method not in ("offload_difference", "residual"):
            out.append(Violation("pci_method", "pci_method in {offload_difference, residual}"))
        if self.attributed_s > self.loop_total_s * (1 + PHASE_SLACK):
            out.append(Violation("loop_total_s", "attributed phases <= loop x 1.02"))
        return out


@dataclass(frozen=True, order=True)
class DeviceId:
    kind: str  # "host" | "mic"
    node: int
    device: Optional[int] = None

    @property
    def stream_id(self) -> str:
        if self.kind == "host":
            return f"host-{self.node}"
        return f"mic-{self.node}-{self.device}"

    @classmethod
    def from_stream_id(cls, stream):
        parts = stream.split("-")
        if parts[0] == "host" and len(parts) == 2:
            return cls("host", int(parts[1]))
        if parts[0] == "mic" and len(parts) == 3:
            return cls("mic", int(parts[1]), int(parts[2]))
        raise ValueError(f"not a device stream id: {stream!r}")

    def __str__(self):
        return self.stream_id


MIN_STATE_SAMPLES = 100


@dataclass(frozen=True)
class DeviceStateReport:
    device: DeviceId
    idle_watts_avg: float
    active_watts_avg: float
    idle_samples: int
    active_samples: int
    idle_time_s: float
    active_time_s: float
    energy_j: float
    low_samples: bool

    @classmethod
    def build(cls, device, idle_watts_avg, active_watts_avg, idle_samples, active_samples,
              idle_time_s, active_time_s):
        energy = idle_watts_avg * idle_time_s + active_watts_avg * active_time_s
        low = idle_samples < MIN_STATE_SAMPLES or active_samples < MIN_STATE_SAMPLES
        return cls(device, idle_watts_avg, active_watts_avg, idle_samples, active_samples,
                   idle_time_s, active_time_s, energy, low)

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["device"] = self.device.stream_id
        return d

    def violations(self):
        out = []
        expected = self.idle_watts_avg * self.idle_time_s + self.active_watts_avg * self.active_time_s
        if not math.isclose(self.energy_j, expected, rel_tol=1e-9, abs_tol=1e-9):
            out.append(Violation("energy_j", "energy = idle avg x idle time + active avg x active time"))
        low = self.idle_samples < MIN_STATE_SAMPLES or self.active_samples < MIN_STATE_SAMPLES
        if self.low_samples != low:
            out.append(Violation("low_samples", "warning flag set iff a state has < 100 samples"))
        for name in ("idle_samples", "active_samples", "idle_time_s", "active_time_s"):
            if not getattr(self, name) >= 0:
                out.append(Violation(name, f"{name} >= 0"))
        return out


@dataclass(frozen=True)
class RunReport:
    config: RunConfig
    phases: PhaseTimings
    device_states: tuple
    mic_mem_bytes: float
    host_comm_mem_bytes: float
    pci_mem_bytes: float
    mic_bandwidth_bps: float
    host_comm_bandwidth_bps: float
    pci_bandwidth_bps: float
    throughput_flops: float
    work_flop: float
    total_energy_j: float
    mic_compute_total_s: float = 0.0
    pci_transfer_total_s: float = 0.0
    measured_vector_intensity: Optional[float] = None
    per_rank_phases: Mapping[int, PhaseTimings] = field(default_factory=FrozenMap)
    offsets: Mapping[str, float] = field(default_factory=FrozenMap)
    warnings: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "device_states", tuple(self.device_states))
        object.__setattr__(self, "warnings", tuple(self.warnings))
        _freeze(self, "per_rank_phases", self.per_rank_phases)
        _freeze(self, "offsets", self.offsets)

    def device(self, stream_id: str) -> DeviceStateReport:
        for state in self.device_states:
            if state.device.stream_id == stream_id:
                return state
        raise KeyError(stream_id)

    def violations(self):
        out = list(self.config.violations()) + list(self.phases.violations())
        for state in self.device_states:
            out.extend(state.violations())
        total = sum(s.energy_j for s in self.device_states)
        if not math.isclose(self.total_energy_j, total, rel_tol=1e-9, abs_tol=1e-9):
            out.append(Violation("total_energy_j", "total energy = sum of device energies"))
        return out


# -- validation entry points -----------------------------------------------

def validate(value) -> list:
    """Every violated invariant of ``value``; an empty list means valid."""
    check = getattr(value, "violations", None)
    if check is None:
        raise TypeError(f"no invariants defined for {type(value).__name__}")
    return check()


def ensure_valid(value):
    problems = validate(value)
    if problems:
        raise ValidationError(problems)
    return value


def validate_stream(anchors: Sequence[TimeAnchor], tolerance_s: float = 0.0) -> list:
    """Stream-level anchor invariants: strictly increasing TFS, wall clock consistent with TFS."""
    out = []
    if not anchors:
        return out
    first = anchors[0]
    prev = None
    for i, anchor in enumerate(anchors):
        if prev is not None and not anchor.tfs > prev.tfs:
            out.append(Violation(f"anchors[{i}].tfs", "tfs strictly increasing"))
        drift = wall_delta(anchor.wall_clock, first.wall_clock) - (anchor.tfs - first.tfs)
        if abs(drift) > WALL_CLOCK_RESOLUTION_S + tolerance_s:
            out.append(Violation(f"anchors[{i}].wall_clock", "wall clock agrees with tfs within 1 s + tolerance"))
        prev = anchor
    return out


def all_violations(values: Iterable) -> list:
    out = []
    for v in values:
        out.extend(validate(v))
    return out
