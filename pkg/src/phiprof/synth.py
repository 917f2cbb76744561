"""Synthetic run generator with known ground truth.

A scenario declares a bulk-synchronous phase schedule, an offload series,
square-wave power levels with Gaussian noise and the true clock offset of
every sampler stream. :func:`generate` renders the four artifact types in
the canonical line grammars and records everything the analyzer is
expected to recover.

Time zero is the application start event. Every rank follows the same
schedule; ranks whose offload finishes early wait inside the force-phase
halo exchange, so all force phases end together.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import yaml

from . import metrics
from .errors import InfeasibleScenarioError
from .manifest import write_manifest
from .model import (
    SECONDS_PER_DAY,
    HostPowerSample,
    MicPowerSample,
    OffloadRecord,
    PerfSample,
    RunConfig,
    TimeAnchor,
    validate,
)
from .parsers import (
    format_event_line,
    format_host_line,
    format_mic_line,
    format_offload_lines,
    format_timer_line,
)
from .power import begin_event, end_event, interval_mask, merge_intervals

TRUTH_FILE = "truth.json"
MIC_CONNECTOR_SHARES = (0.3, 0.3, 0.4)


@dataclass
class PhaseSchedule:
    iterations: int = 8
    position_s: float = 0.6
    velocity_s: float = 0.4
    redistribute_s: float = 1.2  # includes inner_halo_s
    inner_halo_s: float = 0.3
    force_s: float = 5.5  # includes offload, force halo exchange and reduce
    reduce_s: float = 0.15
    jitter: float = 0.1  # relative, per iteration and phase


@dataclass
class OffloadSeries:
    mic_time_s: float = 3.6
    pci_time_s: float = 0.25  # host-side overhead on top of MIC time
    bytes_to: int = 600_000_000
    bytes_from: int = 300_000_000
    rank_jitter: float = 0.05
    cpu_time_reported: bool = True
    llc_miss_per_s: float = 2.0e8
    vpu_instructions_per_s: float = 5.0e9


@dataclass
class DevicePower:
    idle_w: float
    active_w: float
    noise_w: float = 0.0


@dataclass
class HostCounters:
    llc_miss_per_s_comm: float = 4.0e6
    llc_miss_per_s_other: float = 1.5e7
    cycles_per_s_comm: float = 1.2e10
    cycles_per_s_other: float = 3.0e10


@dataclass
class Scenario:
    config: RunConfig
    seed: int = 0
    schedule: PhaseSchedule = field(default_factory=PhaseSchedule)
    offload: OffloadSeries = field(default_factory=OffloadSeries)
    host_power: DevicePower = field(default_factory=lambda: DevicePower(45.0, 135.0))
    mic_power: DevicePower = field(default_factory=lambda: DevicePower(100.0, 200.0))
    dram_fraction: float = 0.15
    host_counters: HostCounters = field(default_factory=HostCounters)
    host_period_s: float = 0.010
    mic_period_s: float = 0.050
    pre_run_s: float = 20.0
    post_run_s: float = 10.0
    app_init_s: float = 0.8  # app TFS at the start event
    wall_start: Optional[float] = None  # true time of day at app start; seeded when None
    offsets: Dict[str, float] = field(default_factory=dict)  # stream id -> true offset
    # per-sample sleep overshoot of a sampler loop, uniform in [0, sampler_overshoot_s)
    sampler_overshoot_s: float = 0.0005
    # rank 0 prints a progress event about this often (jittered by +-20%); 0 disables
    progress_s: float = 0.1
    window_fields: bool = False

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        data = dict(data)
        nested = {"schedule": PhaseSchedule, "offload": OffloadSeries, "host_counters": HostCounters}
        kwargs = {}
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InfeasibleScenarioError(f"unknown scenario keys: {sorted(unknown)}")
        if "config" not in data:
            raise InfeasibleScenarioError("scenario needs a config section")
        try:
            kwargs["config"] = RunConfig.from_dict(data.pop("config"))
            for key, value in data.items():
                if key in nested:
                    kwargs[key] = nested[key](**value)
                elif key in ("host_power", "mic_power"):
                    kwargs[key] = DevicePower(**value)
                else:
                    kwargs[key] = value
        except TypeError as exc:
            raise InfeasibleScenarioError(f"bad scenario field: {exc}") from None
        return cls(**kwargs)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["config"] = self.config.to_dict()
        return d


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise InfeasibleScenarioError(f"{path}: scenario must be a mapping")
    return Scenario.from_dict(data)


def default_scenario(seed: int = 0) -> Scenario:
    return Scenario(RunConfig("synthetic", 1, 1, 50, 2.6e9, 60), seed=seed)


def scenario_for_config(config: RunConfig, seed: int = 0, pre_run_s: float = 20.0,
                        post_run_s: float = 10.0) -> Scenario:
    """Default-shaped scenario for one orchestrated configuration."""
    return Scenario(config, seed=seed, pre_run_s=pre_run_s, post_run_s=post_run_s)


def random_scenario(seed: int, nodes: int = 1, mics_per_node: int = 1, noise_w: float = 0.0,
                    cpu_time_reported: bool = True) -> Scenario:
    """Seeded scenario with phase durations and power levels drawn from plausible ranges."""
    rng = np.random.default_rng(seed)
    u = lambda lo, hi: float(rng.uniform(lo, hi))  # noqa: E731
    mic = u(1.5, 4.0)
    pci = u(0.05, 0.3)
    red = u(0.05, 0.2)
    ih = u(0.15, 0.4)
    schedule = PhaseSchedule(
        iterations=int(rng.integers(4, 9)),
        position_s=u(0.3, 0.8), velocity_s=u(0.2, 0.5),
        redistribute_s=ih + u(0.8, 1.5), inner_halo_s=ih,
        force_s=mic * 1.25 + pci + red + u(0.2, 0.8), reduce_s=red,
        jitter=0.08)
    config = RunConfig("synthetic", nodes, mics_per_node, int(rng.choice([20, 30, 40, 50])),
                       float(rng.choice([1.2e9, 1.8e9, 2.6e9])), int(rng.choice([30, 45, 60])))
    offsets = {}
    for n in range(nodes):
        offsets[f"host-{n}"] = -20.0 - u(0.0, 0.5)
        for d in range(mics_per_node):
            offsets[f"mic-{n}-{d}"] = -20.0 + u(0.5, 3.0)
    return Scenario(
        config=config, seed=seed, schedule=schedule,
        offload=OffloadSeries(mic_time_s=mic, pci_time_s=pci, rank_jitter=0.05,
                              cpu_time_reported=cpu_time_reported),
        host_power=DevicePower(u(35, 55), u(110, 160), noise_w),
        mic_power=DevicePower(u(90, 115), u(170, 230), noise_w),
        offsets=offsets,
    )


# -- schedule construction -------------------------------------------------

@dataclass
class _RankPlan:
    events: List[Tuple[float, str]] = field(default_factory=list)
    timers: Dict[str, float] = field(default_factory=dict)
    offloads: List[Tuple[float, float, float]] = field(default_factory=list)  # (begin, mic, cpu)
    intervals: Dict[str, List[Tuple[float, float]]] = field(default_factory=dict)

    def phase(self, name, start, end):
        self.events.append((start, begin_event(name)))
        self.events.append((end, end_event(name)))
        self.intervals.setdefault(name, []).append((start, end))


def _ms(x):
    # phase edges on the millisecond grid, the resolution of every printed stamp
    return round(x, 3)


def _check(scenario: Scenario):
    cfg = scenario.config
    problems = [str(v) for v in validate(cfg)]
    s, o = scenario.schedule, scenario.offload
    if cfg.mics_per_node < 1:
        problems.append("synthetic runs need at least one MIC per node")
    if s.iterations < 1:
        problems.append("iterations >= 1")
    if s.inner_halo_s > s.redistribute_s:
        problems.append("inner_halo_s exceeds redistribute_s")
    if not 0 <= s.jitter < 0.5 or not 0 <= o.rank_jitter < 0.5:
        problems.append("jitter must be in [0, 0.5)")
    worst_offload = (o.mic_time_s * (1 + o.rank_jitter) + o.pci_time_s) * (1 + s.jitter)
    if worst_offload + s.reduce_s * (1 + s.jitter) > s.force_s * (1 - s.jitter):
        problems.append(f"offload series ({worst_offload:.3f} s worst case) plus reduce does not fit "
                        f"in the force phase ({s.force_s:.3f} s)")
    for name in ("position_s", "velocity_s", "redistribute_s", "inner_halo_s", "force_s", "reduce_s"):
        if getattr(s, name) < 0:
            problems.append(f"{name} >= 0")
    if o.mic_time_s <= 0 or o.pci_time_s < 0 or o.bytes_to < 0 or o.bytes_from < 0:
        problems.append("offload series values must be non-negative (mic time > 0)")
    for p in (scenario.host_power, scenario.mic_power):
        if min(p.idle_w, p.active_w, p.noise_w) < 0:
            problems.append("power levels and noise must be >= 0")
    if scenario.host_period_s < 0.001 or scenario.mic_period_s < 0.050:
        problems.append("host period >= 1 ms and MIC period >= 50 ms")
    if scenario.sampler_overshoot_s < 0 or scenario.progress_s < 0:
        problems.append("sampler_overshoot_s and progress_s must be >= 0")
    if scenario.pre_run_s < 0 or scenario.post_run_s < 0 or scenario.app_init_s < 0:
        problems.append("pre/post run spans and app_init_s must be >= 0")
    if not 0 <= scenario.dram_fraction <= 1:
        problems.append("dram_fraction in [0, 1]")
    if problems:
        raise InfeasibleScenarioError("; ".join(problems))


def _build_schedule(scenario: Scenario, rng) -> Tuple[Dict[int, _RankPlan], float]:
    s, o = scenario.schedule, scenario.offload
    ranks = scenario.config.ranks
    plans = {r: _RankPlan() for r in range(ranks)}
    for r in plans.values():
        r.events.append((0.0, "start"))
        for name in ("position", "velocity", "redistribute", "force", "halo_exchange", "reduce",
                     "inner_transfer", "loop", "comm"):
            r.timers[name] = 0.0
    jit = lambda: 1.0 + float(rng.uniform(-s.jitter, s.jitter))  # noqa: E731
    t = 0.0
    for _ in range(s.iterations):
        pos, vel = _ms(s.position_s * jit()), _ms(s.velocity_s * jit())
        ih = _ms(s.inner_halo_s * jit())
        rc = _ms(max(s.redistribute_s - s.inner_halo_s, 0.0) * jit())
        red = _ms(s.reduce_s * jit())
        force = _ms(s.force_s * jit())
        it_scale = jit()
        mics = {r: _ms(o.mic_time_s * it_scale * (1 + float(rng.uniform(-o.rank_jitter, o.rank_jitter))))
                for r in plans}
        pcis = {r: _ms(o.pci_time_s * jit()) for r in plans}
        for r, plan in plans.items():
            t0 = t
            plan.phase("position", t0, t0 + pos)
            plan.phase("velocity", t0 + pos, t0 + pos + vel)
            rd0 = t0 + pos + vel
            plan.phase("redistribute", rd0, rd0 + rc + ih)
            plan.phase("halo_exchange", rd0 + rc, rd0 + rc + ih)
            f0 = rd0 + rc + ih
            plan.phase("force", f0, f0 + force)
            cpu = _ms(mics[r] + pcis[r])
            plan.phase("offload", f0, f0 + cpu)
            plan.offloads.append((f0, mics[r], cpu))
            fh = _ms(force - cpu - red)
            plan.phase("halo_exchange", f0 + cpu, f0 + cpu + fh)
            plan.phase("reduce", f0 + force - red, f0 + force)
            tm = plan.timers
            tm["position"] += pos
            tm["velocity"] += vel
            tm["redistribute"] += rc + ih
            tm["inner_transfer"] += ih
            tm["halo_exchange"] += ih + fh
            tm["reduce"] += red
            tm["force"] += force
            tm["comm"] += ih + fh + red
        t = t + pos + vel + rc + ih + force
    for plan in plans.values():
        plan.events.append((t, "end"))
        plan.timers["loop"] = t
    if scenario.progress_s > 0:
        root = plans[0]
        tick = scenario.progress_s * (1 + float(rng.uniform(-0.2, 0.2)))
        while tick < t:
            root.events.append((tick, "progress"))
            tick += scenario.progress_s * (1 + float(rng.uniform(-0.2, 0.2)))
        root.events.sort(key=lambda e: e[0])
    return plans, t


# -- rendering -------------------------------------------------------------

def _anchor(wall_start, global_t, tfs):
    return TimeAnchor(int(math.floor(wall_start + global_t)) % SECONDS_PER_DAY, round(tfs, 3))


def _state_series(rng, times, active, level: DevicePower):
    watts = np.where(active, level.active_w, level.idle_w).astype(float)
    if level.noise_w > 0:
        watts = np.maximum(watts + rng.normal(0.0, level.noise_w, size=len(times)), 0.0)
    return watts


def _span_times(rng, offset, period, overshoot, stop):
    # one sample per loop pass: tfs advances by period plus sleep overshoot; stop at global `stop`
    n = int(math.floor((stop - offset) / period + 1e-9)) + 1
    steps = period + (rng.uniform(0.0, overshoot, n) if overshoot > 0 else np.zeros(n))
    tfs = np.round(np.cumsum(steps), 3)
    tfs = tfs[tfs + offset <= stop]
    return tfs, tfs + offset


def _device_truth(times, watts, active, windows_active_s, span):
    first, last = span
    total = last - first
    n_active = int(active.sum())
    n_idle = len(times) - n_active
    idle_avg = float(watts[~active].mean()) if n_idle else 0.0
    active_avg = float(watts[active].mean()) if n_active else 0.0
    idle_time = total - windows_active_s
    return {
        "idle_watts_avg": idle_avg, "active_watts_avg": active_avg,
        "idle_samples": n_idle, "active_samples": n_active,
        "idle_time_s": idle_time, "active_time_s": windows_active_s,
        "energy_j": idle_avg * idle_time + active_avg * windows_active_s,
    }


def _clipped_length(intervals, lo, hi):
    return sum(max(0.0, min(e, hi) - max(s, lo)) for s, e in merge_intervals(intervals))


@dataclass
class SynthRun:
    files: Dict[str, str]
    truth: dict
    config: RunConfig


def generate(scenario: Scenario) -> SynthRun:
    """Render artifact files and the ground truth for ``scenario`` (deterministic in its seed)."""
    _check(scenario)
    cfg = scenario.config
    rng = np.random.default_rng(scenario.seed)
    wall_start = scenario.wall_start
    if wall_start is None:
        wall_start = float(rng.uniform(0, SECONDS_PER_DAY))
    plans, loop_end = _build_schedule(scenario, rng)
    placement = {r: cfg.rank_placement(r) for r in plans}

    offsets = {}
    for n in range(cfg.nodes):
        offsets[f"host-{n}"] = scenario.offsets.get(f"host-{n}", -scenario.pre_run_s - 0.05 * n)
        for d in range(cfg.mics_per_node):
            key = f"mic-{n}-{d}"
            offsets[key] = scenario.offsets.get(key, -scenario.pre_run_s + 0.7 + 0.3 * d)
    unknown = set(scenario.offsets) - set(offsets)
    if unknown:
        raise InfeasibleScenarioError(f"offsets for unknown streams: {sorted(unknown)}")
    mic_stop = loop_end + scenario.post_run_s
    host_stop = mic_stop + 0.2
    files: Dict[str, str] = {}
    truth_devices = {}

    def comm_intervals(ranks):
        out = []
        for r in ranks:
            out += plans[r].intervals["halo_exchange"] + plans[r].intervals["reduce"]
        return out

    # host sampler logs
    host_names = (metrics.HOST_LLC_COUNTER, metrics.HOST_CYCLES_COUNTER)
    hc = scenario.host_counters
    comm_llc_total = comm_cycles_total = 0
    for n in range(cfg.nodes):
        stream = f"host-{n}"
        ranks = [r for r, (node, _) in placement.items() if node == n]
        idle = []
        for r in ranks:
            idle += plans[r].intervals["force"] + plans[r].intervals["halo_exchange"] + plans[r].intervals["reduce"]
        tfs, g = _span_times(rng, offsets[stream], scenario.host_period_s, scenario.sampler_overshoot_s, host_stop)
        in_run = (g >= 0.0) & (g < loop_end)
        active = in_run & ~interval_mask(g, idle)
        watts = _state_series(rng, g, active, scenario.host_power)
        comm = in_run & interval_mask(g, comm_intervals(ranks))
        p = scenario.host_period_s
        llc = rng.poisson(np.where(comm, hc.llc_miss_per_s_comm, hc.llc_miss_per_s_other) * p)
        cyc = np.round(np.where(comm, hc.cycles_per_s_comm, hc.cycles_per_s_other) * p).astype(np.int64)
        comm_llc_total += int(llc[comm].sum())
        comm_cycles_total += int(cyc[comm].sum())
        lines = [f"# host sampler node {n} period_ms={p * 1000:g} counters=package-aggregate"]
        recorded = np.empty(len(g))
        for i in range(len(g)):
            anchor = _anchor(wall_start, g[i], tfs[i])
            dram = round(float(watts[i]) * scenario.dram_fraction, 3)
            core = round(float(watts[i]) - dram, 3)
            power = HostPowerSample.from_parts(anchor, core, dram)
            recorded[i] = power.total_watts
            perf = PerfSample(anchor, {host_names[0]: int(llc[i]), host_names[1]: int(cyc[i])})
            lines.append(format_host_line(power, perf))
        files[f"{stream}.log"] = "\n".join(lines) + "\n"
        span = (float(g[0]), float(g[-1]))
        active_len = _clipped_length(_complement(idle, 0.0, loop_end), *span)
        truth_devices[stream] = _device_truth(g, recorded, active, active_len, span)

    # MIC sampler logs
    for n in range(cfg.nodes):
        for d in range(cfg.mics_per_node):
            stream = f"mic-{n}-{d}"
            ranks = [r for r, pl in placement.items() if pl == (n, d)]
            busy = []
            for r in ranks:
                busy += plans[r].intervals["offload"]
            tfs, g = _span_times(rng, offsets[stream], scenario.mic_period_s, scenario.sampler_overshoot_s,
                                  mic_stop)
            active = (g >= 0.0) & (g < loop_end) & interval_mask(g, busy)
            watts = _state_series(rng, g, active, scenario.mic_power)
            lines = [f"# mic sampler node {n} device {d} period_ms={scenario.mic_period_s * 1000:g}"]
            recorded = np.empty(len(g))
            ema = None
            for i in range(len(g)):
                w = float(watts[i])
                parts = [round(w * share, 3) for share in MIC_CONNECTOR_SHARES]
                windows = ()
                if scenario.window_fields:
                    ema = w if ema is None else 0.9 * ema + 0.1 * w
                    windows = (round(ema, 3), round(ema, 3))
                sample = MicPowerSample.from_parts(_anchor(wall_start, g[i], tfs[i]), *parts, windows)
                recorded[i] = sample.total_watts
                lines.append(format_mic_line(sample))
            files[f"{stream}.log"] = "\n".join(lines) + "\n"
            span = (float(g[0]), float(g[-1]))
            truth_devices[stream] = _device_truth(g, recorded, active, _clipped_length(busy, *span), span)

    # application output and offload report, interleaved across ranks in time order
    app_lines = []
    offload_lines = []
    records = []
    o = scenario.offload
    for r, plan in plans.items():
        node, dev = placement[r]
        for seq, (t, name) in enumerate(plan.events):
            anchor = _anchor(wall_start, t, t + scenario.app_init_s)
            app_lines.append((t, r, seq, format_event_line(r, name, anchor)))
        for seq, (name, value) in enumerate(plan.timers.items()):
            app_lines.append((loop_end + 1.0, r, seq, format_timer_line(r, name, value)))
        for tag, (t0, mic, cpu) in enumerate(plan.offloads, start=1):
            counters = {
                metrics.MIC_LLC_COUNTER: int(round(o.llc_miss_per_s * mic)),
                metrics.MIC_CYCLES_COUNTER: int(round(cfg.mic_frequency_hz * mic)),
            }
            instr = int(round(o.vpu_instructions_per_s * mic))
            counters[metrics.VPU_INSTRUCTIONS_COUNTER] = instr
            counters[metrics.VPU_ELEMENTS_COUNTER] = int(round(cfg.vector_intensity * instr))
            rec = OffloadRecord(r, dev, tag, cpu if o.cpu_time_reported else 0.0, mic,
                                o.bytes_to, o.bytes_from, counters)
            records.append((rec, cpu))
            for seq, line in enumerate(format_offload_lines(rec)):
                offload_lines.append((t0 + cpu, r, seq, line))
    app_lines.sort(key=lambda x: x[:3])
    offload_lines.sort(key=lambda x: x[:3])
    files["app.out"] = "\n".join(x[3] for x in app_lines) + "\n"
    files["offload.rpt"] = "\n".join(x[3] for x in offload_lines) + "\n"

    truth = _truth(scenario, plans, records, truth_devices, offsets, comm_llc_total, comm_cycles_total,
                   wall_start, loop_end)
    return SynthRun(files, truth, cfg)


def _complement(intervals, lo, hi):
    out = []
    cursor = lo
    for s, e in merge_intervals((max(s, lo), min(e, hi)) for s, e in intervals):
        if s > cursor:
            out.append((cursor, s))
        cursor = max(cursor, e)
    if hi > cursor:
        out.append((cursor, hi))
    return out


def _truth(scenario, plans, records, devices, offsets, comm_llc, comm_cycles, wall_start, loop_end):
    cfg = scenario.config
    per_rank = {}
    for r, plan in plans.items():
        tm = plan.timers
        mine = [(rec, cpu) for rec, cpu in records if rec.rank == r]
        mic = sum(rec.mic_time_s for rec, _ in mine)
        pci = sum(cpu for _, cpu in mine) - mic
        per_rank[r] = {
            "host_compute_s": tm["position"] + tm["velocity"] + tm["redistribute"] - tm["inner_transfer"],
            "halo_exchange_s": tm["halo_exchange"], "reduce_s": tm["reduce"],
            "mic_compute_s": mic, "pci_transfer_s": pci, "loop_total_s": tm["loop"],
            "comm_s": tm["comm"],
        }
    mic_all = sum(rec.mic_time_s for rec, _ in records)
    pci_all = sum(cpu for _, cpu in records) - mic_all
    pci_bytes = sum(rec.bytes_total for rec, _ in records)
    mic_llc = sum(rec.counters[metrics.MIC_LLC_COUNTER] for rec, _ in records)
    mic_cycles = sum(rec.counters[metrics.MIC_CYCLES_COUNTER] for rec, _ in records)
    mic_mem = mic_llc * metrics.CACHE_LINE_BYTES
    host_mem = comm_llc * metrics.CACHE_LINE_BYTES
    throughput = cfg.mic_cores * cfg.vector_intensity * cfg.ops_per_cycle * cfg.mic_frequency_hz
    return {
        "seed": scenario.seed,
        "wall_start": wall_start,
        "offsets": dict(offsets, app=-scenario.app_init_s),
        "loop_end_s": loop_end,
        "phases": per_rank[0],
        "per_rank_phases": {str(r): v for r, v in per_rank.items()},
        "device_states": devices,
        "total_energy_j": sum(d["energy_j"] for d in devices.values()),
        "mic_compute_total_s": mic_all,
        "pci_transfer_total_s": pci_all,
        "mic_mem_bytes": mic_mem,
        "mic_bandwidth_bps": mic_mem * cfg.mic_frequency_hz / mic_cycles if mic_cycles else 0.0,
        "host_comm_mem_bytes": host_mem,
        "host_comm_bandwidth_bps": host_mem * cfg.host_frequency_hz / comm_cycles if comm_cycles else 0.0,
        "pci_mem_bytes": pci_bytes,
        "pci_bandwidth_bps": pci_bytes / pci_all if pci_all > 0 else 0.0,
        "throughput_flops": throughput,
        "work_flop": throughput * mic_all,
    }


def write_run(run: SynthRun, out_dir, run_id: Optional[str] = None) -> Path:
    """Write artifacts, truth.json and the manifest into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in run.files.items():
        (out_dir / name).write_text(text, encoding="utf-8")
    (out_dir / TRUTH_FILE).write_text(json.dumps(run.truth, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_manifest(out_dir, run_id or out_dir.name, run.config, "ok", list(run.files), synthetic=True)
    return out_dir

