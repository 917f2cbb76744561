"""Phase-time decomposition from application timers and offload records."""
from __future__ import annotations

import warnings
from collections import defaultdict
from typing import Dict, Iterable, List, Sequence, Tuple

from .errors import InconsistentAccountingError, InconsistentTimersError, MeasurementWarning
from .model import AppTimeline, OffloadRecord, PhaseTimings, ensure_valid
from .sync import HOST_TOLERANCE_S, MIC_TOLERANCE_S

OFFLOAD_DIFFERENCE = "offload_difference"
RESIDUAL = "residual"
COMBINED_TOLERANCE_S = HOST_TOLERANCE_S + MIC_TOLERANCE_S


def _timer(app: AppTimeline, name: str) -> float:
    try:
        return app.named_timers[name]
    except KeyError:
        raise InconsistentTimersError(f"rank {app.rank} missing timer {name}") from None


def host_compute_time(app: AppTimeline) -> float:
    """position + velocity + redistribute, minus the halo exchange nested in redistribute."""
    value = (_timer(app, "position") + _timer(app, "velocity") + _timer(app, "redistribute")
             - _timer(app, "inner_transfer"))
    if value < 0:
        raise InconsistentTimersError(
            f"rank {app.rank}: transfer inside redistribute exceeds host compute ({value:.6f} s)")
    return value


def host_comm_times(app: AppTimeline) -> Tuple[float, float]:
    """(halo exchange, reduce) seconds; their sum is the total communication time."""
    return _timer(app, "halo_exchange"), _timer(app, "reduce")


def mic_compute_time(offloads: Iterable[OffloadRecord]) -> float:
    return sum(r.mic_time_s for r in offloads)


def pci_transfer_time(offloads: Sequence[OffloadRecord], app: AppTimeline, *,
                      host_compute_s: float, halo_exchange_s: float, reduce_s: float,
                      mic_compute_s: float, tolerance_s: float = COMBINED_TOLERANCE_S):
    """PCI time and the method used to get it.

    With every CPU time reported, PCI time is sum(cpu) - sum(mic). Otherwise it is
    the residual loop time after host compute, host comm and device compute.
    Negative values within ``tolerance_s`` are clamped to 0 with a warning.
    """
    offloads = list(offloads)
    if offloads and all(r.cpu_time_defined for r in offloads):
        value = sum(r.cpu_time_s for r in offloads) - sum(r.mic_time_s for r in offloads)
        method = OFFLOAD_DIFFERENCE
    else:
        value = _timer(app, "loop") - host_compute_s - halo_exchange_s - reduce_s - mic_compute_s
        method = RESIDUAL
    if value < 0:
        if value < -tolerance_s:
            raise InconsistentAccountingError(
                f"rank {app.rank}: {method} PCI time {value:.6f} s is below -{tolerance_s:.3f} s")
        warnings.warn(f"rank {app.rank}: PCI time {value:.6f} s clamped to 0", MeasurementWarning,
                      stacklevel=2)
        value = 0.0
    return value, method


def rank_phases(app: AppTimeline, offloads: Sequence[OffloadRecord],
                tolerance_s: float = COMBINED_TOLERANCE_S) -> PhaseTimings:
    host = host_compute_time(app)
    halo, reduce = host_comm_times(app)
    mic = mic_compute_time(offloads)
    pci, method = pci_transfer_time(offloads, app, host_compute_s=host, halo_exchange_s=halo,
                                    reduce_s=reduce, mic_compute_s=mic, tolerance_s=tolerance_s)
    return ensure_valid(PhaseTimings(host, halo, reduce, mic, pci, _timer(app, "loop"), method))


def offloads_by_rank(offloads: Iterable[OffloadRecord]) -> Dict[int, List[OffloadRecord]]:
    out = defaultdict(list)
    for r in offloads:
        out[r.rank].append(r)
    return dict(out)


def profile_phases(app: Dict[int, AppTimeline], offloads: Sequence[OffloadRecord],
                   tolerance_s: float = COMBINED_TOLERANCE_S):
    """(root PhaseTimings, per-rank PhaseTimings).

    The aggregate uses the root rank's timers and offloads; every rank is
    computed as well and kept alongside.
    """
    by_rank = offloads_by_rank(offloads)
    orphans = set(by_rank) - set(app)
    if orphans:
        raise InconsistentTimersError(f"offload records for ranks without timers: {sorted(orphans)}")
    per_rank = {rank: rank_phases(tl, by_rank.get(rank, []), tolerance_s) for rank, tl in sorted(app.items())}
    root = min(per_rank)
    _warn_host_fallback(offloads)
    return per_rank[root], per_rank


def _warn_host_fallback(offloads):
    # a conditional offload that ran on the host reports CPU time but no device time
    fallback = [r for r in offloads if r.cpu_time_defined and r.mic_time_s == 0]
    if fallback:
        warnings.warn(f"{len(fallback)} offload(s) report CPU time but no MIC time; force phase may "
                      "have run on the host while being attributed as host idle",
                      MeasurementWarning, stacklevel=3)
