"""Command line: run experiments, analyze runs, generate synthetic runs, validate, sample."""
from __future__ import annotations

import argparse
import concurrent.futures
import logging
import signal
import sys
import threading
from pathlib import Path
from typing import List, Optional

from . import __version__, analysis, orchestrator, samplers, synth
from .errors import InfeasibleScenarioError, PhiprofError, PlanError, SamplerStartupError
from .parsers import parse_run_dir
from .sync import synchronize

log = logging.getLogger("phiprof")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def _positive(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0: {text}")
    return value


def _options(args) -> analysis.AnalysisOptions:
    return analysis.AnalysisOptions(host_tolerance_s=args.tolerance_host_ms / 1000.0,
                                    mic_tolerance_s=args.tolerance_mic_ms / 1000.0)


# -- run -------------------------------------------------------------------

def cmd_run(args) -> int:
    try:
        plan = orchestrator.load_plan(args.plan)
        if args.executor:
            plan.executor = args.executor
        if args.time_divisor:
            plan.time_divisor = args.time_divisor
        configs = orchestrator.enumerate_runs(plan)
        executor = orchestrator.make_executor(plan, args.executor)
    except PlanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out or "results")
    print(f"{len(configs)} runs -> {out}")
    try:
        runs = orchestrator.run_experiment(plan, out, executor)
    except KeyboardInterrupt:
        print(f"interrupted; {out / orchestrator.EXPERIMENT_MANIFEST} left incomplete", file=sys.stderr)
        return EXIT_FAILED
    failed = [r for r in runs if not r.ok]
    for r in runs:
        line = f"{r.run_id}: {r.status}"
        if not r.ok:
            line += f" at step {r.failed_step} ({orchestrator.STEPS[r.failed_step - 1]}): {r.cause}"
        print(line)
    print(f"{len(runs) - len(failed)}/{len(runs)} runs ok")
    return EXIT_FAILED if failed else EXIT_OK


# -- analyze ---------------------------------------------------------------

def _analyze_one(run_dir: Path, out_dir: Path, options):
    report = analysis.analyze_run(run_dir, options)
    out_dir.mkdir(parents=True, exist_ok=True)
    analysis.write_report(report, out_dir, run_dir.name)
    return analysis.csv_row(report, run_dir.name), list(report.warnings)


def cmd_analyze(args) -> int:
    path = Path(args.path)
    if not path.is_dir():
        print(f"error: {path} is not a directory", file=sys.stderr)
        return EXIT_USAGE
    run_dirs = analysis.find_run_dirs(path)
    if not run_dirs:
        print(f"error: no run directories under {path}", file=sys.stderr)
        return EXIT_FAILED
    single = run_dirs == [path]
    out_root = Path(args.out) if args.out else path
    options = _options(args)

    def target(run_dir):
        if args.out is None:
            return run_dir
        return out_root if single else out_root / run_dir.name

    rows, failures = [], 0
    jobs = max(1, args.jobs)
    with concurrent.futures.ProcessPoolExecutor(jobs) if jobs > 1 else _Inline() as pool:
        futures = [pool.submit(_analyze_one, d, target(d), options) for d in run_dirs]
        for run_dir, fut in zip(run_dirs, futures):
            try:
                row, warns = fut.result()
            except PhiprofError as exc:
                print(f"{run_dir.name}: error: {exc}", file=sys.stderr)
                failures += 1
                continue
            rows.append(row)
            print(f"{run_dir.name}: ok, total energy {row['total_energy_j']:.1f} J, work {row['work_flop']:.4g} FLOP")
            if warns:
                print("  warnings:")
                for w in warns:
                    print(f"    - {w}")
    if not single:
        out_root.mkdir(parents=True, exist_ok=True)
        analysis.write_csv(rows, out_root / analysis.REPORT_CSV)
        print(f"{len(rows)} rows -> {out_root / analysis.REPORT_CSV}")
    return EXIT_FAILED if failures else EXIT_OK


class _Inline:
    """Executor stand-in that runs submissions immediately in this process."""

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False

    def submit(self, fn, *a):
        fut = concurrent.futures.Future()
        try:
            fut.set_result(fn(*a))
        except Exception as exc:
            fut.set_exception(exc)
        return fut


# -- synth -----------------------------------------------------------------

def cmd_synth(args) -> int:
    try:
        if args.scenario:
            scenario = synth.load_scenario(args.scenario)
        else:
            scenario = synth.default_scenario()
        if args.seed is not None:
            scenario.seed = args.seed
        run = synth.generate(scenario)
    except OSError as exc:
        print(f"error: cannot read scenario: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InfeasibleScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = synth.write_run(run, args.out or "synthetic-run")
    print(f"{len(run.files)} artifact files + {synth.TRUTH_FILE} -> {out}")
    return EXIT_OK


# -- validate --------------------------------------------------------------

def cmd_validate(args) -> int:
    path = Path(args.path)
    if not path.is_dir():
        print(f"error: {path} is not a directory", file=sys.stderr)
        return EXIT_USAGE
    run_dirs = analysis.find_run_dirs(path)
    if not run_dirs:
        print(f"error: no run directories under {path}", file=sys.stderr)
        return EXIT_FAILED
    options = _options(args)
    failures = 0
    for run_dir in run_dirs:
        try:
            parsed = parse_run_dir(run_dir)
            timeline = synchronize(parsed, options.host_tolerance_s, options.mic_tolerance_s)
        except PhiprofError as exc:
            print(f"{run_dir.name}: invalid: {exc}", file=sys.stderr)
            failures += 1
            continue
        streams = ", ".join(f"{s} {off:+.3f}s" for s, off in sorted(timeline.offsets.items()))
        print(f"{run_dir.name}: ok ({len(parsed.app)} ranks, {len(parsed.offloads)} offloads; offsets {streams})")
    return EXIT_FAILED if failures else EXIT_OK


# -- sample ----------------------------------------------------------------

def cmd_sample(args) -> int:
    spec = samplers.SamplerSpec(
        kind=args.kind, output_path=args.out,
        period_s=args.period_ms / 1000.0 if args.period_ms else None,
        source_path=args.source, counter_names=list(args.counter or []),
        powercap_root=args.powercap_root, label=args.label or "")
    stop = threading.Event()
    for sig in (signal.SIGTERM, signal.SIGINT):
        signal.signal(sig, lambda *_: stop.set())
    try:
        n = samplers.run_sampler(spec, stop)
    except SamplerStartupError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    log.info("%d samples written to %s", n, args.out)
    return EXIT_OK


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    tol = argparse.ArgumentParser(add_help=False)
    tol.add_argument("--tolerance-host-ms", type=_positive, default=20.0,
                     help="host stream synchronization tolerance (default 20)")
    tol.add_argument("--tolerance-mic-ms", type=_positive, default=100.0,
                     help="MIC stream synchronization tolerance (default 100)")

    parser = argparse.ArgumentParser(prog="phiprof", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="execute an experiment plan")
    p.add_argument("--plan", required=True, help="plan file (YAML)")
    p.add_argument("--executor", choices=orchestrator.EXECUTORS, help="overrides the plan and PHIPROF_EXECUTOR")
    p.add_argument("--time-divisor", type=_positive, help="divide every sleep by this factor (testing)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", parents=[common, tol], help="analyze a run or experiment directory")
    p.add_argument("path")
    p.add_argument("--jobs", type=int, default=1, help="analyze runs in parallel")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic run with ground truth")
    p.add_argument("scenario", nargs="?", help="scenario file (YAML); default scenario when omitted")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("validate", parents=[common, tol], help="parse and synchronize artifacts only")
    p.add_argument("path")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("sample", parents=[common], help="run one sampler until SIGTERM")
    p.add_argument("--kind", choices=samplers.KINDS, required=True)
    p.add_argument("--period-ms", type=_positive)
    p.add_argument("--source", help="recorded log to replay")
    p.add_argument("--counter", action="append", help="perf counter, generic name or NAME=0xCODE")
    p.add_argument("--powercap-root", default=samplers.POWERCAP_ROOT)
    p.add_argument("--label")
    p.set_defaults(func=cmd_sample)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "sample" and not args.out:
        parser.error("sample needs --out")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
