"""Memory, bandwidth, vectorization, throughput and work metrics."""
from __future__ import annotations

import warnings
from typing import Iterable, Tuple

from .errors import MeasurementWarning, UndefinedBandwidthError
from .model import VI_BOUNDS, OffloadRecord

CACHE_LINE_BYTES = 64

# default counter names; Ivy Bridge hosts use MEM_LOAD_UOPS_RETIRED:L3_MISS instead
HOST_LLC_COUNTER = "MEM_LOAD_UOPS_MISC_RETIRED:LLC_MISS"
HOST_CYCLES_COUNTER = "CPU_CLK_UNHALTED:THREAD_P"
MIC_LLC_COUNTER = "L2_DATA_READ_MISS_MEM_FILL"
MIC_CYCLES_COUNTER = "CPU_CLK_UNHALTED"
VPU_ELEMENTS_COUNTER = "VPU_ELEMENTS_ACTIVE"
VPU_INSTRUCTIONS_COUNTER = "VPU_INSTRUCTIONS_EXECUTED"


def memory_bytes(llc_misses: int, line_bytes: int = CACHE_LINE_BYTES) -> int:
    if llc_misses < 0:
        raise ValueError("llc_misses must be >= 0")
    return llc_misses * line_bytes


def bandwidth_bps(mem_bytes: float, frequency_hz: float, unhalted_cycles: float) -> float:
    """Bytes moved per second of unhalted execution at ``frequency_hz``."""
    if unhalted_cycles <= 0:
        raise UndefinedBandwidthError("bandwidth undefined: zero unhalted cycles")
    return mem_bytes * frequency_hz / unhalted_cycles


def pci_metrics(offloads: Iterable[OffloadRecord], pci_time_s: float) -> Tuple[int, float]:
    """(bytes moved both directions, bytes per second of PCI transfer time)."""
    total = sum(r.bytes_to_device + r.bytes_from_device for r in offloads)
    if total == 0:
        return 0, 0.0
    if pci_time_s <= 0:
        raise UndefinedBandwidthError(f"{total} bytes transferred in zero PCI time")
    return total, total / pci_time_s


def vectorization_intensity(vpu_elements: int, vpu_instructions: int, precision: str = "double") -> float:
    """Active vector elements per vector instruction; warns when outside the width bound."""
    if vpu_instructions <= 0:
        raise ValueError("vectorization intensity undefined: zero VPU instructions")
    vi = vpu_elements / vpu_instructions
    if not vi_in_bounds(vi, precision):
        lo, hi = VI_BOUNDS[precision]
        warnings.warn(f"vectorization intensity {vi:g} outside [{lo:g}, {hi:g}] for {precision} precision",
                      MeasurementWarning, stacklevel=2)
    return vi


def vi_in_bounds(vi: float, precision: str) -> bool:
    lo, hi = VI_BOUNDS[precision]
    return lo <= vi <= hi


def throughput_flops(cores: int, vi: float, ops_per_cycle: float, frequency_hz: float) -> float:
    if min(cores, vi, ops_per_cycle, frequency_hz) <= 0:
        raise ValueError("throughput inputs must all be > 0")
    return cores * vi * ops_per_cycle * frequency_hz


def work_flop(throughput: float, mic_compute_s: float) -> float:
    if throughput < 0 or mic_compute_s < 0:
        raise ValueError("work inputs must be >= 0")
    return throughput * mic_compute_s


def ops_per_cycle_estimate(vectorized_fma_ops: int, other_ops: int) -> float:
    """Average operations per cycle when a vectorized fused multiply-add counts as two."""
    total = vectorized_fma_ops + other_ops
    if vectorized_fma_ops < 0 or other_ops < 0 or total == 0:
        raise ValueError("need a positive operation count")
    return (2 * vectorized_fma_ops + other_ops) / total


def counter_total(records, name: str) -> int:
    return sum(r.counters.get(name, 0) for r in records)
