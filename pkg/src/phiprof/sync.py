"""Place every sample stream on one run-relative clock.

Each anchor carries a 1 s wall-clock stamp (floored) and an exact TFS. For
a stream with offset ``off`` (global = tfs + off) and an origin whose true
wall time is ``W0 = wall_o + phi``, every anchor constrains

    wall_i <= wall_o + phi + tfs_i + off < wall_i + 1

so ``off + phi`` lies in the intersection of one-second intervals taken over
all anchors of the stream, and ``phi`` lies in the same kind of intersection
taken over the application's own events. Each estimate is the midpoint of
its feasible interval; the interval narrows as anchors straddle second ticks.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Dict, Mapping, Sequence, Tuple

import numpy as np

from .errors import MeasurementWarning, UnplaceablePhaseError, UnsynchronizableStreamError
from .model import SECONDS_PER_DAY, FrozenMap, TimeAnchor

HOST_TOLERANCE_S = 0.020
MIC_TOLERANCE_S = 0.100
APP_STREAM = "app"
START_EVENT = "start"


@dataclass(frozen=True)
class SyncedTimeline:
    origin: TimeAnchor
    offsets: Mapping[str, float]
    tolerances: Mapping[str, float]
    # global [first, last] anchor time per stream
    spans: Mapping[str, Tuple[float, float]] = field(default_factory=FrozenMap)
    # feasible offset interval per stream; its width bounds the estimate error
    bounds: Mapping[str, Tuple[float, float]] = field(default_factory=FrozenMap)

    def __post_init__(self):
        for name in ("offsets", "tolerances", "spans", "bounds"):
            value = getattr(self, name)
            if not isinstance(value, FrozenMap):
                object.__setattr__(self, name, FrozenMap(value))

    def to_global(self, stream: str, tfs):
        return to_global(self, stream, tfs)


def to_global(timeline: SyncedTimeline, stream: str, tfs):
    """Stream-local TFS (scalar or array) -> seconds relative to application start."""
    try:
        offset = timeline.offsets[stream]
    except KeyError:
        raise KeyError(f"unknown stream id {stream!r}") from None
    if isinstance(tfs, (list, tuple)):
        tfs = np.asarray(tfs, dtype=float)
    return tfs + offset


def default_tolerance(stream: str, host_s=HOST_TOLERANCE_S, mic_s=MIC_TOLERANCE_S) -> float:
    return mic_s if stream.startswith("mic") else host_s


def _wall_deltas(walls: np.ndarray, ref: int) -> np.ndarray:
    d = (walls - ref) % SECONDS_PER_DAY
    return np.where(d >= SECONDS_PER_DAY // 2, d - SECONDS_PER_DAY, d).astype(float)


def feasible_interval(anchors: Sequence[TimeAnchor], ref_wall: int, tfs_shift: float = 0.0):
    """(lo, hi) of x with wall_i <= ref_wall + x + (tfs_i - tfs_shift) < wall_i + 1 for all anchors."""
    walls = np.fromiter((a.wall_clock for a in anchors), dtype=np.int64, count=len(anchors))
    tfs = np.fromiter((a.tfs for a in anchors), dtype=float, count=len(anchors)) - tfs_shift
    base = _wall_deltas(walls, ref_wall) - tfs
    return float(base.max()), float((base + 1.0).min())


def _resolve(stream, lo, hi, tolerance):
    if lo > hi:
        gap = lo - hi
        if gap > tolerance:
            raise UnsynchronizableStreamError(stream, gap)
    return 0.5 * (lo + hi)


def synchronize_streams(streams: Mapping[str, Sequence[TimeAnchor]],
                        app_anchors: Sequence[TimeAnchor],
                        start: TimeAnchor,
                        tolerances: Mapping[str, float] | None = None) -> SyncedTimeline:
    """Offsets for ``streams`` relative to the application ``start`` anchor."""
    tolerances = dict(tolerances or {})
    tolerances.setdefault(APP_STREAM, HOST_TOLERANCE_S)
    for stream in streams:
        tolerances.setdefault(stream, default_tolerance(stream))

    app = list(app_anchors) or [start]
    phi_lo, phi_hi = feasible_interval(app, start.wall_clock, start.tfs)
    # the origin's own stamp already pins phi to [0, 1)
    phi_lo, phi_hi = max(phi_lo, 0.0), min(phi_hi, 1.0)
    phi = _resolve(APP_STREAM, phi_lo, phi_hi, tolerances[APP_STREAM])

    offsets: Dict[str, float] = {APP_STREAM: -start.tfs}
    bounds: Dict[str, Tuple[float, float]] = {APP_STREAM: (-start.tfs, -start.tfs)}
    spans: Dict[str, Tuple[float, float]] = {
        APP_STREAM: (app[0].tfs - start.tfs, app[-1].tfs - start.tfs)}
    for stream, anchors in streams.items():
        if not anchors:
            raise UnsynchronizableStreamError(stream, float("inf"))
        lo, hi = feasible_interval(anchors, start.wall_clock)
        x = _resolve(stream, lo, hi, tolerances[stream])
        off = x - phi
        offsets[stream] = off
        bounds[stream] = (lo - phi_hi, hi - phi_lo)
        half_width = 0.5 * (bounds[stream][1] - bounds[stream][0])
        if half_width > tolerances[stream]:
            warnings.warn(f"{stream}: offset known only to +-{half_width * 1e3:.0f} ms "
                          f"(tolerance {tolerances[stream] * 1e3:.0f} ms); too few anchors straddle "
                          f"second ticks", MeasurementWarning, stacklevel=2)
        spans[stream] = (anchors[0].tfs + off, anchors[-1].tfs + off)
    return SyncedTimeline(start, offsets, tolerances, spans, bounds)


def find_start(app_timelines) -> TimeAnchor:
    """Start event of the lowest rank that reports one."""
    for rank in sorted(app_timelines):
        starts = app_timelines[rank].events(START_EVENT)
        if starts:
            return starts[0]
    raise UnplaceablePhaseError(START_EVENT, "application output has no start event")


def synchronize(parsed, host_tolerance_s=HOST_TOLERANCE_S, mic_tolerance_s=MIC_TOLERANCE_S) -> SyncedTimeline:
    """Synchronize every sampler stream of a parsed run against the application clock.

    All ranks share one application clock (TFS starts after a common barrier),
    so their events jointly form the ``app`` stream.
    """
    start = find_start(parsed.app)
    app_anchors = sorted((a for tl in parsed.app.values() for _, a in tl.event_anchors),
                         key=lambda a: a.tfs)
    streams = parsed.streams()
    tolerances = {s: default_tolerance(s, host_tolerance_s, mic_tolerance_s) for s in streams}
    tolerances[APP_STREAM] = host_tolerance_s
    return synchronize_streams(streams, app_anchors, start, tolerances)
