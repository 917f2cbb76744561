"""Run-directory analysis: parse, synchronize, profile, and report."""
from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import metrics
from .manifest import MANIFEST
from .errors import MeasurementWarning, PhiprofError, UndefinedBandwidthError
from .model import DeviceId, RunConfig, RunReport, validate
from .parsers import ParsedRun, parse_run_dir
from .phases import profile_phases
from .power import COMM_PHASES, attribute_power, build_state_windows, interval_mask, phase_intervals, \
    power_series, rank_placement
from .sync import HOST_TOLERANCE_S, MIC_TOLERANCE_S, SyncedTimeline, synchronize

log = logging.getLogger(__name__)

REPORT_JSON = "report.json"
REPORT_CSV = "report.csv"

CSV_COLUMNS = (
    "run_id", "system_name", "nodes", "mics_per_node", "problem_size", "host_frequency_hz",
    "mic_cores", "mic_frequency_hz", "precision", "vector_intensity", "ops_per_cycle",
    "host_compute_s", "halo_exchange_s", "reduce_s", "mic_compute_s", "pci_transfer_s",
    "loop_total_s", "pci_method",
    "host_idle_w", "host_active_w", "mic_idle_w", "mic_active_w",
    "host_energy_j", "mic_energy_j", "total_energy_j",
    "mic_mem_bytes", "mic_bandwidth_bps", "host_comm_mem_bytes", "host_comm_bandwidth_bps",
    "pci_mem_bytes", "pci_bandwidth_bps", "throughput_flops", "work_flop", "warnings",
)


@dataclass(frozen=True)
class AnalysisOptions:
    host_tolerance_s: float = HOST_TOLERANCE_S
    mic_tolerance_s: float = MIC_TOLERANCE_S
    host_llc_counter: str = metrics.HOST_LLC_COUNTER
    host_cycles_counter: str = metrics.HOST_CYCLES_COUNTER
    mic_llc_counter: str = metrics.MIC_LLC_COUNTER
    mic_cycles_counter: str = metrics.MIC_CYCLES_COUNTER
    cache_line_bytes: int = metrics.CACHE_LINE_BYTES


class AnalysisError(PhiprofError):
    pass


def read_manifest(run_dir) -> dict:
    path = Path(run_dir) / MANIFEST
    if not path.is_file():
        raise AnalysisError(f"{run_dir}: missing {MANIFEST}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise AnalysisError(f"{path}: line {exc.lineno}: {exc.msg}") from None


def read_config(run_dir) -> RunConfig:
    data = read_manifest(run_dir)
    try:
        return RunConfig.from_dict(data["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise AnalysisError(f"{run_dir}/{MANIFEST}: bad config ({exc})") from None


def _host_comm_counters(parsed: ParsedRun, timeline: SyncedTimeline, placement, options):
    llc = cycles = 0
    for node, samples in parsed.host_perf.items():
        intervals = []
        for rank, tl in parsed.app.items():
            if placement.get(rank, (0, None))[0] != node:
                continue
            for phase in COMM_PHASES:
                intervals.extend(phase_intervals(tl, phase, timeline))
        tfs = np.fromiter((s.anchor.tfs for s in samples), dtype=float, count=len(samples))
        mask = interval_mask(timeline.to_global(f"host-{node}", tfs), intervals)
        for sample, inside in zip(samples, mask):
            if inside:
                llc += sample.counters.get(options.host_llc_counter, 0)
                cycles += sample.counters.get(options.host_cycles_counter, 0)
    return llc, cycles


def _bandwidth(mem, freq, cycles, what):
    try:
        return metrics.bandwidth_bps(mem, freq, cycles)
    except UndefinedBandwidthError:
        if mem:
            warnings.warn(f"{what} bandwidth undefined: no unhalted cycles recorded", MeasurementWarning,
                          stacklevel=2)
        return 0.0


def analyze_parsed(parsed: ParsedRun, config: RunConfig, options: AnalysisOptions = AnalysisOptions()):
    """RunReport for an already-parsed run."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", MeasurementWarning)
        for v in validate(config):
            warnings.warn(f"config: {v}", MeasurementWarning)
        timeline = synchronize(parsed, options.host_tolerance_s, options.mic_tolerance_s)
        tol = options.host_tolerance_s + options.mic_tolerance_s
        root, per_rank = profile_phases(parsed.app, parsed.offloads, tol)
        placement = rank_placement(config, parsed.offloads)
        windows = build_state_windows(root, timeline, parsed.app, placement, parsed.offloads)

        states = []
        for node, samples in sorted(parsed.host_power.items()):
            device = DeviceId("host", node)
            states.append(attribute_power(power_series(timeline, device, samples), windows))
        for (node, dev), samples in sorted(parsed.mic_power.items()):
            device = DeviceId("mic", node, dev)
            states.append(attribute_power(power_series(timeline, device, samples), windows))

        offloads = parsed.offloads
        mic_llc = metrics.counter_total(offloads, options.mic_llc_counter)
        mic_cycles = metrics.counter_total(offloads, options.mic_cycles_counter)
        mic_mem = metrics.memory_bytes(mic_llc, options.cache_line_bytes)
        mic_bw = _bandwidth(mic_mem, config.mic_frequency_hz, mic_cycles, "MIC")

        host_llc, host_cycles = _host_comm_counters(parsed, timeline, placement, options)
        host_mem = metrics.memory_bytes(host_llc, options.cache_line_bytes)
        host_bw = _bandwidth(host_mem, config.host_frequency_hz, host_cycles, "host communication")

        # PCI bandwidth over every rank's transfers, so bytes and time share one scope
        pci_total_s = sum(p.pci_transfer_s for p in per_rank.values())
        if offloads and pci_total_s == 0:
            warnings.warn("PCI transfer time is zero; PCI bandwidth reported as 0", MeasurementWarning)
            pci_bytes, pci_bw = sum(r.bytes_total for r in offloads), 0.0
        else:
            pci_bytes, pci_bw = metrics.pci_metrics(offloads, pci_total_s)
        if not offloads:
            warnings.warn("no offload records; PCI bandwidth reported as 0", MeasurementWarning)

        measured_vi = None
        elements = metrics.counter_total(offloads, metrics.VPU_ELEMENTS_COUNTER)
        instructions = metrics.counter_total(offloads, metrics.VPU_INSTRUCTIONS_COUNTER)
        if instructions > 0:
            measured_vi = metrics.vectorization_intensity(elements, instructions, config.precision)

        throughput = metrics.throughput_flops(config.mic_cores, config.vector_intensity,
                                              config.ops_per_cycle, config.mic_frequency_hz)
        mic_total_s = sum(p.mic_compute_s for p in per_rank.values())
        work = metrics.work_flop(throughput, mic_total_s)

    messages = []
    for w in caught:
        if issubclass(w.category, MeasurementWarning):
            messages.append(str(w.message))
        else:
            warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    report = RunReport(
        config=config, phases=root, device_states=states,
        mic_mem_bytes=mic_mem, host_comm_mem_bytes=host_mem, pci_mem_bytes=pci_bytes,
        mic_bandwidth_bps=mic_bw, host_comm_bandwidth_bps=host_bw, pci_bandwidth_bps=pci_bw,
        throughput_flops=throughput, work_flop=work,
        total_energy_j=sum(s.energy_j for s in states),
        mic_compute_total_s=mic_total_s, pci_transfer_total_s=pci_total_s,
        measured_vector_intensity=measured_vi, per_rank_phases=per_rank,
        offsets=dict(timeline.offsets), warnings=messages,
    )
    # config issues are warnings, the rest must hold
    problems = [v for v in validate(report) if v.field not in {p.field for p in validate(config)}]
    if problems:
        raise AnalysisError("; ".join(str(p) for p in problems))
    return report


def analyze_run(run_dir, options: AnalysisOptions = AnalysisOptions()) -> RunReport:
    config = read_config(run_dir)
    parsed = parse_run_dir(run_dir)
    return analyze_parsed(parsed, config, options)


# -- serialization ---------------------------------------------------------

def report_to_dict(report: RunReport, run_id: Optional[str] = None) -> dict:
    return {
        "run_id": run_id,
        "config": report.config.to_dict(),
        "phases": report.phases.to_dict(),
        "per_rank_phases": {str(r): p.to_dict() for r, p in sorted(report.per_rank_phases.items())},
        "device_states": [s.to_dict() for s in report.device_states],
        "mic_mem_bytes": report.mic_mem_bytes,
        "host_comm_mem_bytes": report.host_comm_mem_bytes,
        "pci_mem_bytes": report.pci_mem_bytes,
        "mic_bandwidth_bps": report.mic_bandwidth_bps,
        "host_comm_bandwidth_bps": report.host_comm_bandwidth_bps,
        "pci_bandwidth_bps": report.pci_bandwidth_bps,
        "measured_vector_intensity": report.measured_vector_intensity,
        "throughput_flops": report.throughput_flops,
        "work_flop": report.work_flop,
        "mic_compute_total_s": report.mic_compute_total_s,
        "pci_transfer_total_s": report.pci_transfer_total_s,
        "total_energy_j": report.total_energy_j,
        "offsets": dict(report.offsets),
        "warnings": list(report.warnings),
    }


def _weighted(states, kind, state):
    chosen = [s for s in states if s.device.kind == kind]
    n = sum(getattr(s, f"{state}_samples") for s in chosen)
    if not n:
        return 0.0
    return sum(getattr(s, f"{state}_watts_avg") * getattr(s, f"{state}_samples") for s in chosen) / n


def csv_row(report: RunReport, run_id: str) -> Dict[str, object]:
    states = report.device_states
    row = {"run_id": run_id}
    row.update(report.config.to_dict())
    row.update(report.phases.to_dict())
    row.update({
        "host_idle_w": _weighted(states, "host", "idle"),
        "host_active_w": _weighted(states, "host", "active"),
        "mic_idle_w": _weighted(states, "mic", "idle"),
        "mic_active_w": _weighted(states, "mic", "active"),
        "host_energy_j": sum(s.energy_j for s in states if s.device.kind == "host"),
        "mic_energy_j": sum(s.energy_j for s in states if s.device.kind == "mic"),
        "total_energy_j": report.total_energy_j,
        "mic_mem_bytes": report.mic_mem_bytes,
        "mic_bandwidth_bps": report.mic_bandwidth_bps,
        "host_comm_mem_bytes": report.host_comm_mem_bytes,
        "host_comm_bandwidth_bps": report.host_comm_bandwidth_bps,
        "pci_mem_bytes": report.pci_mem_bytes,
        "pci_bandwidth_bps": report.pci_bandwidth_bps,
        "throughput_flops": report.throughput_flops,
        "work_flop": report.work_flop,
        "warnings": len(report.warnings),
    })
    row.pop("system_name", None)
    row["system_name"] = report.config.system_name
    return {k: row[k] for k in CSV_COLUMNS}


def write_report(report: RunReport, run_dir, run_id: str):
    run_dir = Path(run_dir)
    (run_dir / REPORT_JSON).write_text(json.dumps(report_to_dict(report, run_id), indent=2) + "\n",
                                       encoding="utf-8")
    write_csv([csv_row(report, run_id)], run_dir / REPORT_CSV)


def write_csv(rows: List[dict], path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def is_run_dir(path) -> bool:
    path = Path(path)
    return (path / MANIFEST).is_file() or (path / "app.out").is_file()


def find_run_dirs(path) -> List[Path]:
    """The run directory itself, or every run directory directly below an experiment directory."""
    path = Path(path)
    if is_run_dir(path):
        return [path]
    return sorted(p for p in path.iterdir() if p.is_dir() and is_run_dir(p))
