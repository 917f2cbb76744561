"""Experiment plans and the nine-step measured execution of each run.

Per run: start host samplers, start MIC samplers, pre-run sleep, workload,
post-run sleep, stop MIC samplers, stop host samplers, copy MIC logs to the
run directory, cool-down sleep. Runs execute one after another. The
``simulated`` executor fabricates artifacts with the synthetic generator;
the ``shell`` executor launches real processes from command templates.
"""
from __future__ import annotations

import datetime
import itertools
import json
import logging
import os
import shlex
import shutil
import signal
import subprocess
import sys
import tempfile
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import yaml

from . import synth
from .errors import PhiprofError, PlanError, StepFailure
from .manifest import MANIFEST, write_manifest
from .model import DeviceId, RunConfig, validate

log = logging.getLogger(__name__)

STEPS = (
    "start_host_samplers",
    "start_mic_samplers",
    "pre_sleep",
    "workload",
    "post_sleep",
    "stop_mic_samplers",
    "stop_host_samplers",
    "collect_mic_files",
    "cooldown",
)
STEP_NO = {name: i for i, name in enumerate(STEPS, start=1)}
EXECUTORS = ("shell", "simulated")
EXECUTOR_ENV = "PHIPROF_EXECUTOR"
STEPS_LOG = "steps.log"
APP_OUT = "app.out"
OFFLOAD_RPT = "offload.rpt"
EXPERIMENT_MANIFEST = "experiment.json"
MIN_BASELINE_S = 10.0
OFFLOAD_MARKER = "[Offload]"


class CollectError(PhiprofError):
    pass


@dataclass(frozen=True)
class StaticConfig:
    system_name: str
    nodes: int
    mics_per_node: int
    problem_size: int


@dataclass
class Timing:
    pre_sleep_s: float = 20.0
    post_sleep_s: float = 10.0
    cooldown_s: float = 60.0


@dataclass
class SamplerTemplates:
    host: str = "{python} -m phiprof sample --kind host_live --out {output} --label node{node}"
    mic: Optional[str] = None  # live MIC sampling needs a site-specific command
    # where the MIC sampler writes on the device side, and how it comes back
    mic_stage: str = "{stage_dir}/mic-{node}-{device}.log"
    mic_collect: Optional[str] = None  # None: local file copy


@dataclass
class ExperimentPlan:
    static_configs: List[StaticConfig]
    config_space: List[Tuple[float, int]]  # (host_frequency_hz, mic_cores)
    workload: str = ""
    timing: Timing = field(default_factory=Timing)
    executor: str = "simulated"
    time_divisor: float = 1.0
    defaults: Dict[str, object] = field(default_factory=dict)  # extra RunConfig fields
    samplers: SamplerTemplates = field(default_factory=SamplerTemplates)
    hosts: List[str] = field(default_factory=list)  # node index -> host name for templates
    seed: int = 0
    fail_step: Optional[int] = None  # simulated executor only: inject a failure at this step

    def problems(self) -> List[str]:
        out = []
        t = self.timing
        if min(t.pre_sleep_s, t.post_sleep_s, t.cooldown_s) < 0:
            out.append("sleeps must be >= 0")
        if t.pre_sleep_s < MIN_BASELINE_S:
            out.append(f"pre_sleep_s must be >= {MIN_BASELINE_S:g} s to hold an idle baseline")
        if not self.time_divisor > 0:
            out.append("time_divisor must be > 0")
        if self.executor not in EXECUTORS:
            out.append(f"executor must be one of {', '.join(EXECUTORS)}")
        if self.executor == "shell" and not self.workload:
            out.append("shell executor needs a workload command")
        if self.fail_step is not None and self.fail_step not in STEP_NO.values():
            out.append("fail_step must be a step number 1-9")
        return out

    def scaled(self, seconds: float) -> float:
        return seconds / self.time_divisor

    def to_dict(self) -> dict:
        d = asdict(self)
        d["static_configs"] = [asdict(s) for s in self.static_configs]
        d["config_space"] = [{"host_frequency_hz": f, "mic_cores": c} for f, c in self.config_space]
        return d


# -- plan files ------------------------------------------------------------

def _as_list(value):
    return value if isinstance(value, list) else [value]


def _expand(entry: dict, keys: Sequence[str], where: str) -> List[tuple]:
    """Cartesian product of list-valued keys, in key order."""
    missing = [k for k in keys if k not in entry]
    unknown = set(entry) - set(keys)
    if missing or unknown:
        raise PlanError(f"{where}: missing {missing} unknown {sorted(unknown)}")
    return list(itertools.product(*(_as_list(entry[k]) for k in keys)))


def plan_from_dict(data: dict) -> ExperimentPlan:
    if not isinstance(data, dict):
        raise PlanError("plan must be a mapping")
    known = {"static_configs", "config_space", "workload", "timing", "executor", "time_divisor",
             "defaults", "samplers", "hosts", "seed", "fail_step"}
    unknown = set(data) - known
    if unknown:
        raise PlanError(f"unknown plan keys: {sorted(unknown)}")
    statics = []
    for i, entry in enumerate(_as_list(data.get("static_configs") or [])):
        if not isinstance(entry, dict):
            raise PlanError(f"static_configs[{i}] must be a mapping")
        for name, nodes, mics, size in _expand(entry, ("system_name", "nodes", "mics_per_node",
                                                       "problem_size"), f"static_configs[{i}]"):
            statics.append(StaticConfig(str(name), int(nodes), int(mics), int(size)))
    space = []
    raw_space = data.get("config_space") or []
    for i, entry in enumerate(_as_list(raw_space)):
        if not isinstance(entry, dict):
            raise PlanError(f"config_space[{i}] must be a mapping")
        for freq, cores in _expand(entry, ("host_frequency_hz", "mic_cores"), f"config_space[{i}]"):
            space.append((float(freq), int(cores)))
    try:
        plan = ExperimentPlan(
            static_configs=statics, config_space=space,
            workload=str(data.get("workload") or ""),
            timing=Timing(**(data.get("timing") or {})),
            executor=str(data.get("executor") or "simulated"),
            time_divisor=float(data.get("time_divisor", 1.0)),
            defaults=dict(data.get("defaults") or {}),
            samplers=SamplerTemplates(**(data.get("samplers") or {})),
            hosts=[str(h) for h in data.get("hosts") or []],
            seed=int(data.get("seed", 0)),
            fail_step=data.get("fail_step"),
        )
    except (TypeError, ValueError) as exc:
        raise PlanError(f"bad plan field: {exc}") from None
    return plan


def load_plan(path) -> ExperimentPlan:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise PlanError(f"cannot read plan {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise PlanError(f"{path}: {exc}") from None
    return plan_from_dict(data)


def enumerate_runs(plan: ExperimentPlan) -> List[RunConfig]:
    """Static configurations outer, configuration space inner."""
    problems = plan.problems()
    if problems:
        raise PlanError("; ".join(problems))
    if not plan.static_configs or not plan.config_space:
        raise PlanError("plan has no runs: static_configs and config_space must both be non-empty")
    runs = []
    for s in plan.static_configs:
        for freq, cores in plan.config_space:
            try:
                cfg = RunConfig(s.system_name, s.nodes, s.mics_per_node, s.problem_size, freq, cores,
                                **plan.defaults)
            except TypeError as exc:
                raise PlanError(f"bad defaults: {exc}") from None
            bad = validate(cfg)
            if bad:
                raise PlanError(f"invalid run config {cfg}: " + "; ".join(str(v) for v in bad))
            runs.append(cfg)
    return runs


def run_id_for(index: int, cfg: RunConfig) -> str:
    return (f"{index:03d}-{cfg.system_name}-n{cfg.nodes}-m{cfg.mics_per_node}-s{cfg.problem_size}"
            f"-f{cfg.host_frequency_hz / 1e9:g}-c{cfg.mic_cores}")


def devices_of(cfg: RunConfig) -> Tuple[List[DeviceId], List[DeviceId]]:
    hosts = [DeviceId("host", n) for n in range(cfg.nodes)]
    mics = [DeviceId("mic", n, d) for n in range(cfg.nodes) for d in range(cfg.mics_per_node)]
    return hosts, mics


def log_name(device: DeviceId) -> str:
    return f"{device.stream_id}.log"


# -- run records -----------------------------------------------------------

@dataclass
class StepRecord:
    step: int
    name: str
    begin: float  # monotonic seconds
    end: Optional[float] = None
    error: Optional[str] = None


@dataclass
class RunArtifacts:
    run_id: str
    config: RunConfig
    run_dir: Path
    host_logs: List[str]
    mic_logs: List[str]
    app_out: str = APP_OUT
    offload_rpt: str = OFFLOAD_RPT
    status: str = "running"
    failed_step: Optional[int] = None
    cause: Optional[str] = None
    steps: List[StepRecord] = field(default_factory=list)

    @property
    def declared_files(self) -> List[str]:
        return self.host_logs + self.mic_logs + [self.app_out, self.offload_rpt]

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def status_dict(self) -> dict:
        d = {"status": self.status}
        if self.failed_step is not None:
            d.update(failed_step=self.failed_step, failed_step_name=STEPS[self.failed_step - 1], cause=self.cause)
        return d


class StepLog:
    """Append-only per-run step log with wall clock and monotonic stamps."""

    def __init__(self, path: Path):
        self.path = path
        self.fh = open(path, "w", encoding="utf-8")

    def write(self, step: int, name: str, event: str, mono: float, detail: str = ""):
        wall = datetime.datetime.now().isoformat(timespec="milliseconds")
        line = f"{wall} mono={mono:.6f} step={step} {name} {event}"
        if detail:
            line += f" {detail}"
        self.fh.write(line + "\n")
        self.fh.flush()

    def close(self):
        self.fh.close()


def read_step_log(path) -> List[Tuple[int, str, str, float]]:
    """(step, name, event, monotonic) per line of a steps.log."""
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        parts = line.split()
        mono = float(parts[1].split("=", 1)[1])
        step = int(parts[2].split("=", 1)[1])
        out.append((step, parts[3], parts[4], mono))
    return out


def sleep_at_least(seconds: float, clock=time.monotonic):
    end = clock() + seconds
    while True:
        left = end - clock()
        if left <= 0:
            return
        time.sleep(left)


# -- executors -------------------------------------------------------------

class Executor:
    """Starts and stops samplers, runs the workload and retrieves MIC logs for one run."""

    def prepare(self, cfg: RunConfig, run_dir: Path, plan: ExperimentPlan):
        pass

    def start_sampler(self, device: DeviceId):
        raise NotImplementedError

    def stop_sampler(self, handle):
        raise NotImplementedError

    def run_workload(self):
        raise NotImplementedError

    def collect_mic(self, device: DeviceId, dest: Path):
        raise NotImplementedError

    def live_samplers(self) -> int:
        raise NotImplementedError

    def check(self, step: int):
        """Hook called before each step; the simulated executor injects failures here."""

    def finish(self):
        pass


class _SimSampler:
    # holds a pre-rendered log and writes it when stopped, like a sampler flushing its output
    def __init__(self, path: Path, text: str):
        self.path = path
        self.text = text
        self.stop_event = threading.Event()
        self.thread = threading.Thread(target=self._run, daemon=True, name=f"sim-{path.name}")

    def _run(self):
        with open(self.path, "w", encoding="utf-8") as fh:
            fh.write(self.text.split("\n", 1)[0] + "\n")
            fh.flush()
            self.stop_event.wait()
            fh.write(self.text.split("\n", 1)[1])


class SimulatedExecutor(Executor):
    """Artifacts from the synthetic generator; sampler tasks are threads, the workload a scaled sleep."""

    def __init__(self, fail_step: Optional[int] = None):
        self.fail_step = fail_step
        self.handles: List[_SimSampler] = []

    def prepare(self, cfg, run_dir, plan):
        self.run_dir = run_dir
        self.plan = plan
        self.stage_dir = Path(tempfile.mkdtemp(prefix="phiprof-mic-"))
        self.handles = []
        scenario = synth.scenario_for_config(cfg, plan.seed, plan.timing.pre_sleep_s, plan.timing.post_sleep_s)
        self.run = synth.generate(scenario)

    def check(self, step):
        # a workload failure is raised by run_workload itself, after partial output
        if step == self.fail_step and step != STEP_NO["workload"]:
            raise RuntimeError(f"injected failure at step {step}")

    def start_sampler(self, device):
        name = log_name(device)
        base = self.stage_dir if device.kind == "mic" else self.run_dir
        handle = _SimSampler(base / name, self.run.files[name])
        handle.thread.start()
        self.handles.append(handle)
        return handle

    def stop_sampler(self, handle):
        handle.stop_event.set()
        handle.thread.join(5.0)

    def run_workload(self):
        loop = self.run.truth["loop_end_s"]
        if self.fail_step == STEP_NO["workload"]:
            # a crashed workload leaves partial output behind
            text = self.run.files[APP_OUT]
            (self.run_dir / APP_OUT).write_text(text[: len(text) // 2], encoding="utf-8")
            raise RuntimeError("workload exited with status 1")
        sleep_at_least(self.plan.scaled(loop))
        for name in (APP_OUT, OFFLOAD_RPT):
            (self.run_dir / name).write_text(self.run.files[name], encoding="utf-8")

    def collect_mic(self, device, dest):
        src = self.stage_dir / log_name(device)
        if not src.exists():
            raise FileNotFoundError(f"{src} was never written")
        shutil.copyfile(src, dest)

    def live_samplers(self):
        return sum(h.thread.is_alive() for h in self.handles)

    def finish(self):
        shutil.rmtree(self.stage_dir, ignore_errors=True)


class ShellExecutor(Executor):
    """Real processes started from the plan's command templates."""

    def __init__(self, stop_timeout_s: float = 5.0):
        self.stop_timeout_s = stop_timeout_s
        self.procs: List[subprocess.Popen] = []

    def prepare(self, cfg, run_dir, plan):
        self.cfg = cfg
        self.run_dir = run_dir
        self.plan = plan
        self.stage_dir = run_dir / ".stage"
        self.stage_dir.mkdir(exist_ok=True)
        self.procs = []
        check_host_frequency(cfg.host_frequency_hz)

    def _vars(self, **extra) -> dict:
        cfg = self.cfg
        v = dict(cfg.to_dict(), ranks=cfg.ranks, run_dir=str(self.run_dir), run_id=self.run_dir.name,
                 stage_dir=str(self.stage_dir), python=shlex.quote(sys.executable))
        v.update(extra)
        return v

    def _render(self, template: str, **extra) -> str:
        try:
            return template.format_map(self._vars(**extra))
        except (KeyError, IndexError, ValueError) as exc:
            raise PlanError(f"cannot resolve template {template!r}: {exc}") from None

    def _host(self, node):
        return self.plan.hosts[node] if node < len(self.plan.hosts) else "localhost"

    def start_sampler(self, device):
        t = self.plan.samplers
        if device.kind == "host":
            output = self.run_dir / log_name(device)
            template = t.host
        else:
            if not t.mic:
                raise PlanError("no MIC sampler command configured (samplers.mic)")
            output = Path(self._render(t.mic_stage, node=device.node, device=device.device))
            template = t.mic
        cmd = self._render(template, node=device.node, device=device.device or 0,
                           host=self._host(device.node), output=shlex.quote(str(output)))
        log.info("starting sampler: %s", cmd)
        proc = subprocess.Popen(shlex.split(cmd), stdin=subprocess.DEVNULL, start_new_session=True)
        self.procs.append(proc)
        time.sleep(0.05)
        if proc.poll() is not None:
            raise RuntimeError(f"sampler exited at startup with status {proc.returncode}: {cmd}")
        return proc

    def stop_sampler(self, proc):
        if proc.poll() is not None:
            return
        try:
            os.killpg(proc.pid, signal.SIGTERM)
            proc.wait(self.stop_timeout_s)
        except subprocess.TimeoutExpired:
            os.killpg(proc.pid, signal.SIGKILL)
            proc.wait()
        except ProcessLookupError:
            proc.wait()

    def run_workload(self):
        cmd = self._render(self.plan.workload)
        env = dict(os.environ, OFFLOAD_REPORT="2")
        raw = self.run_dir / "workload.out"
        log.info("running workload: %s", cmd)
        with open(raw, "w", encoding="utf-8") as out, open(self.run_dir / "workload.err", "w") as err:
            proc = subprocess.Popen(shlex.split(cmd), stdout=out, stderr=err, env=env, start_new_session=True)
            self.procs.append(proc)
            code = proc.wait()
        split_workload_output(raw, self.run_dir / APP_OUT, self.run_dir / OFFLOAD_RPT)
        if code != 0:
            raise RuntimeError(f"workload exited with status {code}")

    def collect_mic(self, device, dest):
        staged = Path(self._render(self.plan.samplers.mic_stage, node=device.node, device=device.device))
        template = self.plan.samplers.mic_collect
        if template is None:
            shutil.copyfile(staged, dest)
            return
        cmd = self._render(template, node=device.node, device=device.device, host=self._host(device.node),
                           staged=shlex.quote(str(staged)), dest=shlex.quote(str(dest)))
        subprocess.run(shlex.split(cmd), check=True, stdin=subprocess.DEVNULL)

    def live_samplers(self):
        return sum(p.poll() is None for p in self.procs)

    def finish(self):
        for proc in self.procs:
            self.stop_sampler(proc)
        shutil.rmtree(self.stage_dir, ignore_errors=True)


def split_workload_output(raw: Path, app_out: Path, offload_rpt: Path):
    """Offload report lines go to one file, everything else to the other."""
    with open(raw, encoding="utf-8", errors="replace") as src, \
            open(app_out, "w", encoding="utf-8") as app, open(offload_rpt, "w", encoding="utf-8") as rpt:
        for line in src:
            (rpt if OFFLOAD_MARKER in line else app).write(line)


def check_host_frequency(expected_hz: float, tolerance: float = 0.05) -> Optional[float]:
    """Warn when the reported CPU frequency differs from the configured one; frequency is never set."""
    path = Path("/sys/devices/system/cpu/cpu0/cpufreq/scaling_cur_freq")
    try:
        actual = int(path.read_text().strip()) * 1000.0
    except (OSError, ValueError):
        log.warning("host frequency not readable; recorded as configured (%g Hz)", expected_hz)
        return None
    if abs(actual - expected_hz) > tolerance * expected_hz:
        log.warning("host reports %g Hz but the run is configured for %g Hz", actual, expected_hz)
    return actual


def make_executor(plan: ExperimentPlan, name: Optional[str] = None) -> Executor:
    name = name or os.environ.get(EXECUTOR_ENV) or plan.executor
    if name == "simulated":
        return SimulatedExecutor(plan.fail_step)
    if name == "shell":
        return ShellExecutor()
    raise PlanError(f"unknown executor {name!r}")


# -- one run ---------------------------------------------------------------

def execute_run(cfg: RunConfig, plan: ExperimentPlan, run_dir, executor: Executor,
                clock=time.monotonic) -> RunArtifacts:
    """Run the nine steps; any failure stops started samplers and still honors the cool-down."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    hosts, mics = devices_of(cfg)
    run = RunArtifacts(run_dir.name, cfg, run_dir, [log_name(d) for d in hosts], [log_name(d) for d in mics])
    steps = StepLog(run_dir / STEPS_LOG)
    started: Dict[DeviceId, object] = {}

    def step(name, action):
        n = STEP_NO[name]
        rec = StepRecord(n, name, clock())
        run.steps.append(rec)
        steps.write(n, name, "begin", rec.begin)
        try:
            executor.check(n)
            action()
        except BaseException as exc:
            rec.end = clock()
            rec.error = f"{type(exc).__name__}: {exc}"
            steps.write(n, name, "failed", rec.end, rec.error)
            if isinstance(exc, Exception):
                raise StepFailure(n, rec.error) from exc
            raise
        rec.end = clock()
        steps.write(n, name, "end", rec.end)

    def start_all(devices):
        for d in devices:
            started[d] = executor.start_sampler(d)

    def stop_all(devices):
        errors = []
        for d in devices:
            handle = started.pop(d, None)
            if handle is not None:
                try:
                    executor.stop_sampler(handle)
                except Exception as exc:
                    errors.append(f"{d.stream_id}: {exc}")
        if errors:
            raise RuntimeError("; ".join(errors))

    def collect_mics():
        for d in mics:
            executor.collect_mic(d, run_dir / log_name(d))

    try:
        try:
            executor.prepare(cfg, run_dir, plan)
            step("start_host_samplers", lambda: start_all(hosts))
            step("start_mic_samplers", lambda: start_all(mics))
            step("pre_sleep", lambda: sleep_at_least(plan.scaled(plan.timing.pre_sleep_s), clock))
            step("workload", executor.run_workload)
            step("post_sleep", lambda: sleep_at_least(plan.scaled(plan.timing.post_sleep_s), clock))
            step("stop_mic_samplers", lambda: stop_all(mics))
            step("stop_host_samplers", lambda: stop_all(hosts))
            step("collect_mic_files", collect_mics)
            run.status = "ok"
        except StepFailure as exc:
            run.status, run.failed_step, run.cause = "failed", exc.step, exc.cause
            log.error("run %s: %s", run.run_id, exc)
        except PhiprofError as exc:
            # preparation failed before any step started
            run.status, run.failed_step, run.cause = "failed", 1, str(exc)
            log.error("run %s: %s", run.run_id, exc)
        finally:
            for handle in list(started.values()):
                try:
                    executor.stop_sampler(handle)
                except Exception as exc:  # keep stopping the rest
                    log.error("stopping sampler: %s", exc)
            started.clear()
            if run.failed_step is not None and run.failed_step < STEP_NO["collect_mic_files"]:
                # keep whatever MIC logs exist for diagnosis
                for d in mics:
                    try:
                        executor.collect_mic(d, run_dir / log_name(d))
                    except Exception:
                        pass
            executor.finish()
        try:
            step("cooldown", lambda: sleep_at_least(plan.scaled(plan.timing.cooldown_s), clock))
        except StepFailure as exc:
            if run.ok:
                run.status, run.failed_step, run.cause = "failed", exc.step, exc.cause
    finally:
        steps.close()
    if run.ok:
        empty = [n for n in run.declared_files if not (run_dir / n).is_file() or (run_dir / n).stat().st_size == 0]
        if empty:
            run.status, run.failed_step, run.cause = "failed", STEP_NO["collect_mic_files"], \
                f"missing or empty: {', '.join(empty)}"
    return run

def collect(run: RunArtifacts, out_dir) -> dict:
    """Place the run's files under ``out_dir/run_id`` and write its manifest (idempotent)."""
    dest = Path(out_dir) / run.run_id
    dest.mkdir(parents=True, exist_ok=True)
    names = run.declared_files + [STEPS_LOG]
    present, missing = [], []
    for name in names:
        src = Path(run.run_dir) / name
        if not src.is_file():
            missing.append(name)
            continue
        if src.resolve() != (dest / name).resolve():
            shutil.copyfile(src, dest / name)
        present.append(name)
    if missing and run.ok:
        raise CollectError(f"run {run.run_id}: declared file missing: {', '.join(missing)}")
    extra = run.status_dict()
    extra.pop("status")
    if missing:
        extra["missing"] = sorted(missing)
    return write_manifest(dest, run.run_id, run.config, run.status, present, **extra)


# -- whole experiments -----------------------------------------------------

def _write_experiment(out_dir: Path, plan: ExperimentPlan, entries: List[dict], complete: bool, total: int):
    data = {"plan": plan.to_dict(), "runs": entries, "planned_runs": total, "complete": complete}
    tmp = out_dir / (EXPERIMENT_MANIFEST + ".tmp")
    tmp.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, out_dir / EXPERIMENT_MANIFEST)


def run_experiment(plan: ExperimentPlan, out_dir, executor: Optional[Executor] = None) -> List[RunArtifacts]:
    """Every run of the plan in order; experiment.json stays incomplete if interrupted."""
    configs = enumerate_runs(plan)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    executor = executor or make_executor(plan)
    results: List[RunArtifacts] = []
    entries: List[dict] = []
    _write_experiment(out_dir, plan, entries, False, len(configs))
    for i, cfg in enumerate(configs):
        run_dir = out_dir / run_id_for(i, cfg)
        run = execute_run(cfg, plan, run_dir, executor)
        manifest = collect(run, out_dir)
        results.append(run)
        entries.append({"run_id": run.run_id, "manifest": f"{run.run_id}/{MANIFEST}", **run.status_dict(),
                        "files": len(manifest["files"])})
        _write_experiment(out_dir, plan, entries, False, len(configs))
        log.info("run %d/%d %s: %s", i + 1, len(configs), run.run_id, run.status)
    _write_experiment(out_dir, plan, entries, True, len(configs))
    return results
