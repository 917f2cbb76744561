"""Idle/active state windows per device and per-state power attribution."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import CoverageError, MeasurementWarning, UnplaceablePhaseError
from .model import MIN_STATE_SAMPLES, AppTimeline, DeviceId, DeviceStateReport, FrozenMap, PhaseTimings
from .sync import APP_STREAM, START_EVENT, SyncedTimeline

IDLE = "idle"
ACTIVE = "active"
END_EVENT = "end"
OFFLOAD_PHASE = "offload"
# host waits (idle) while communicating and for the entire force phase,
# which contains device compute and PCI transfer
HOST_IDLE_PHASES = ("force", "halo_exchange", "reduce")
COMM_PHASES = ("halo_exchange", "reduce")


def begin_event(phase: str) -> str:
    return f"{phase}:begin"


def end_event(phase: str) -> str:
    return f"{phase}:end"


class Window(NamedTuple):
    start: float
    end: float
    state: str

    @property
    def length(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class StateWindows:
    windows: Mapping[DeviceId, Tuple[Window, ...]]

    def __post_init__(self):
        if not isinstance(self.windows, FrozenMap):
            object.__setattr__(self, "windows", FrozenMap({k: tuple(v) for k, v in self.windows.items()}))

    def __getitem__(self, device: DeviceId) -> Tuple[Window, ...]:
        return self.windows[device]

    def devices(self):
        return sorted(self.windows)


class PowerSeries(NamedTuple):
    device: DeviceId
    times: np.ndarray  # global seconds
    watts: np.ndarray


# -- interval helpers ------------------------------------------------------

def merge_intervals(intervals: Iterable[Tuple[float, float]]) -> List[Tuple[float, float]]:
    out: List[List[float]] = []
    for start, end in sorted(intervals):
        if end <= start:
            continue
        if out and start <= out[-1][1]:
            out[-1][1] = max(out[-1][1], end)
        else:
            out.append([start, end])
    return [(s, e) for s, e in out]


def interval_mask(times: np.ndarray, intervals: Sequence[Tuple[float, float]]) -> np.ndarray:
    """True where a time falls in some half-open [start, end) interval."""
    times = np.asarray(times, dtype=float)
    if not intervals:
        return np.zeros(times.shape, dtype=bool)
    merged = merge_intervals(intervals)
    starts = np.array([s for s, _ in merged])
    ends = np.array([e for _, e in merged])
    idx = np.searchsorted(starts, times, side="right") - 1
    ok = idx >= 0
    mask = np.zeros(times.shape, dtype=bool)
    mask[ok] = times[ok] < ends[idx[ok]]
    return mask


def phase_intervals(app: AppTimeline, phase: str, timeline: SyncedTimeline) -> List[Tuple[float, float]]:
    """Global [begin, end) intervals of every instance of ``phase`` on one rank."""
    out = []
    open_at = None
    for name, anchor in app.event_anchors:
        if name == begin_event(phase):
            if open_at is not None:
                raise UnplaceablePhaseError(phase, f"rank {app.rank}: nested begin at tfs {anchor.tfs:.3f}")
            open_at = anchor.tfs
        elif name == end_event(phase):
            if open_at is None:
                raise UnplaceablePhaseError(phase, f"rank {app.rank}: end without begin at tfs {anchor.tfs:.3f}")
            out.append((timeline.to_global(APP_STREAM, open_at), timeline.to_global(APP_STREAM, anchor.tfs)))
            open_at = None
    if open_at is not None:
        raise UnplaceablePhaseError(phase, f"rank {app.rank}: begin at tfs {open_at:.3f} never ends")
    return out


def run_interval(app: Mapping[int, AppTimeline], timeline: SyncedTimeline) -> Tuple[float, float]:
    """Global [start, end) of the measured application run."""
    start = timeline.to_global(APP_STREAM, timeline.origin.tfs)
    ends = [a.tfs for tl in app.values() for a in tl.events(END_EVENT)]
    if ends:
        return start, timeline.to_global(APP_STREAM, max(ends))
    root = app[min(app)]
    return start, start + root.named_timers["loop"]


def rank_placement(config, offloads=()) -> Dict[int, Tuple[int, Optional[int]]]:
    """rank -> (node, device); the device a rank actually offloaded to wins over the default."""
    placement = {r: config.rank_placement(r) for r in range(config.ranks)}
    seen: Dict[int, Dict[int, int]] = {}
    for rec in offloads:
        counts = seen.setdefault(rec.rank, {})
        counts[rec.device_id] = counts.get(rec.device_id, 0) + 1
    for rank, counts in seen.items():
        node = placement.get(rank, config.rank_placement(rank))[0]
        placement[rank] = (node, max(counts, key=counts.get))
    return placement


def _partition(span, run, marked, marked_state, default_state) -> List[Window]:
    first, last = span
    run_start, run_end = run
    marks = merge_intervals((max(s, run_start), min(e, run_end)) for s, e in marked)
    raw = [Window(-np.inf, run_start, IDLE)]
    cursor = run_start
    for s, e in marks:
        if s > cursor:
            raw.append(Window(cursor, s, default_state))
        raw.append(Window(s, e, marked_state))
        cursor = e
    if run_end > cursor:
        raw.append(Window(cursor, run_end, default_state))
    raw.append(Window(run_end, np.inf, IDLE))
    out: List[Window] = []
    for w in raw:
        s, e = max(w.start, first), min(w.end, last)
        if e <= s:
            continue
        if out and out[-1].state == w.state:
            out[-1] = Window(out[-1].start, e, w.state)
        else:
            out.append(Window(s, e, w.state))
    if not out:
        out.append(Window(first, last, IDLE))
    return out


def _check_placeable(tl: AppTimeline, phase: str, needed: bool):
    if needed and not tl.events(begin_event(phase)):
        raise UnplaceablePhaseError(phase, f"rank {tl.rank} has time in {phase} but no {begin_event(phase)} events")


def build_state_windows(phases: PhaseTimings, timeline: SyncedTimeline, app: Mapping[int, AppTimeline],
                        placement: Mapping[int, Tuple[int, Optional[int]]],
                        offloads=()) -> StateWindows:
    """Idle/active windows covering each device stream's span.

    Host: idle during communication and the whole force phase, active for the
    rest of the run. MIC: active during offload execution, idle otherwise.
    Time before the run start and after its end is idle for every device.
    """
    if phases.loop_total_s > 0 and not any(tl.events(START_EVENT) for tl in app.values()):
        raise UnplaceablePhaseError(START_EVENT)
    run = run_interval(app, timeline)
    offload_ranks = {r.rank for r in offloads if r.mic_time_s > 0}
    host_idle: Dict[int, List[Tuple[float, float]]] = {}
    mic_active: Dict[Tuple[int, int], List[Tuple[float, float]]] = {}
    for rank, tl in sorted(app.items()):
        node, dev = placement.get(rank, (0, None))
        for phase in HOST_IDLE_PHASES:
            _check_placeable(tl, phase, tl.named_timers.get(phase, 0) > 0)
            host_idle.setdefault(node, []).extend(phase_intervals(tl, phase, timeline))
        _check_placeable(tl, OFFLOAD_PHASE, rank in offload_ranks)
        if dev is not None:
            mic_active.setdefault((node, dev), []).extend(phase_intervals(tl, OFFLOAD_PHASE, timeline))
    out = {}
    for stream, span in timeline.spans.items():
        if stream == APP_STREAM:
            continue
        device = DeviceId.from_stream_id(stream)
        if device.kind == "host":
            out[device] = _partition(span, run, host_idle.get(device.node, []), IDLE, ACTIVE)
        else:
            out[device] = _partition(span, run, mic_active.get((device.node, device.device), []), ACTIVE, IDLE)
    return StateWindows(out)


# -- attribution -----------------------------------------------------------

def power_series(timeline: SyncedTimeline, device: DeviceId, samples) -> PowerSeries:
    tfs = np.fromiter((s.anchor.tfs for s in samples), dtype=float, count=len(samples))
    watts = np.fromiter((s.total_watts for s in samples), dtype=float, count=len(samples))
    return PowerSeries(device, timeline.to_global(device.stream_id, tfs), watts)


def assign_windows(times: np.ndarray, windows: Sequence[Window]) -> np.ndarray:
    """Index of the window holding each time; a time on an edge goes to the later window."""
    starts = np.array([w.start for w in windows])
    idx = np.searchsorted(starts, times, side="right") - 1
    last_end = windows[-1].end
    bad = (idx < 0) | (times > last_end)
    if bad.any():
        t = float(np.asarray(times)[bad][0])
        raise CoverageError(f"sample at global {t:.3f} s lies outside all state windows "
                            f"[{windows[0].start:.3f}, {last_end:.3f}]")
    return idx


def attribute_power(series: PowerSeries, windows: StateWindows) -> DeviceStateReport:
    """Per-state sample means, state durations and energy for one device."""
    wins = windows[series.device]
    times = np.asarray(series.times, dtype=float)
    watts = np.asarray(series.watts, dtype=float)
    is_active_window = np.array([w.state == ACTIVE for w in wins])
    if len(times):
        active = is_active_window[assign_windows(times, wins)]
    else:
        active = np.zeros(0, dtype=bool)
    n_active = int(active.sum())
    n_idle = int(len(times) - n_active)
    idle_avg = float(watts[~active].mean()) if n_idle else 0.0
    active_avg = float(watts[active].mean()) if n_active else 0.0
    idle_time = float(sum(w.length for w in wins if w.state == IDLE))
    active_time = float(sum(w.length for w in wins if w.state == ACTIVE))
    report = DeviceStateReport.build(series.device, idle_avg, active_avg, n_idle, n_active,
                                     idle_time, active_time)
    if report.low_samples:
        warnings.warn(f"{series.device}: fewer than {MIN_STATE_SAMPLES} samples in a state "
                      f"(idle {n_idle}, active {n_active})", MeasurementWarning, stacklevel=2)
    return report
