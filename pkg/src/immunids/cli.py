"""Command-line entry point.

Stages talk only through files:

``simulate``  scenario -> ``{kind}_seed{seed}.trace`` plus ``.plan.json`` sidecars
``extract``   trace directory -> ``dataset_w{W}.tsv`` per window size
``train``     dataset directory -> single-classifier report
``cascade``   dataset directory -> cascade report
``energy``    reference or measured FP rates -> energy table and plot data
``report``    all of the above in one go

Exit codes: 0 success, 1 config error, 2 data error, 3 invariant violation.
"""
from __future__ import annotations

import argparse
import logging
import re
import sys
from pathlib import Path

from . import energy
from .evaluation import evaluate_cascade, evaluate_single
from .netsim import MISBEHAVIOR_KINDS, ConfigError, InfeasiblePlan, TraceParseError, read_trace, write_trace
from .pipeline import (DatasetParseError, ExperimentConfig, RunRecord, extract_family, family_monitors,
                       load_dataset, plan_from_json, plan_to_json, run_family, run_name, save_dataset,
                       simulate)
from .reports import ReportError, cascade_report, measured_fp_rates, read_report, single_report

log = logging.getLogger("immunids")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INVARIANT = 0, 1, 2, 3
TRACE_NAME = re.compile(r"^(?P<kind>[a-z]+)_seed(?P<seed>\d+)\.trace$")
DATASET_NAME = re.compile(r"^dataset_w(?P<w>[0-9.]+)\.tsv$")
SINGLE_MODES = ("F0", "F1", "F2", "f0")


class DataError(Exception):
    """Input files are missing or inconsistent."""


def parse_seeds(text: str) -> tuple[int, ...]:
    """``"1-5"``, ``"1,3,7"`` or a mix such as ``"1-3,9"``."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        try:
            seeds += list(range(int(lo), int(hi) + 1)) if sep else [int(lo)]
        except ValueError:
            raise ConfigError(f"bad seed list {text!r}") from None
    if not seeds:
        raise ConfigError("seed list is empty")
    return tuple(seeds)


def parse_windows(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(w) for w in text.split(",") if w.strip())
    except ValueError:
        raise ConfigError(f"bad window list {text!r}") from None


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if getattr(args, "seeds", None):
        overrides["seeds"] = parse_seeds(args.seeds)
    if getattr(args, "window", None):
        overrides["window_sizes"] = parse_windows(args.window)
    if overrides:
        cfg = ExperimentConfig(**{**cfg.__dict__, **overrides})
    return cfg


def _emit(text: str, out: str | None):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# -- stages ---------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = load_config(args)
    out = Path(args.out or "traces")
    out.mkdir(parents=True, exist_ok=True)
    topology = cfg.scenario.topology()
    for kind in cfg.kinds:
        for seed in cfg.seeds:
            trace, plan = simulate(cfg.scenario, kind, seed, topology)
            stem = out / run_name(kind, seed)
            with open(stem.with_suffix(".trace"), "w", encoding="utf-8", newline="\n") as fh:
                write_trace(trace, fh)
            stem.with_suffix(".plan.json").write_text(plan_to_json(plan) + "\n", encoding="utf-8")
            log.info("%s: %d events, %d delivered of %d", stem.name, len(trace),
                     trace.stats.delivered, trace.stats.injected)
    return EXIT_OK


def _trace_runs(directory: Path, seeds=None) -> list[RunRecord]:
    if not directory.is_dir():
        raise DataError(f"trace directory not found: {directory}")
    runs = []
    for path in directory.iterdir():
        m = TRACE_NAME.match(path.name)
        if not m or m["kind"] not in MISBEHAVIOR_KINDS:
            continue
        seed = int(m["seed"])
        if seeds is not None and seed not in seeds:
            continue
        sidecar = path.with_name(path.name[:-len(".trace")] + ".plan.json")
        if not sidecar.is_file():
            raise DataError(f"missing plan sidecar {sidecar.name}")
        plan = plan_from_json(sidecar.read_text(encoding="utf-8"))

        def load(p=path):
            with open(p, encoding="utf-8") as fh:
                try:
                    return read_trace(fh)
                except TraceParseError as exc:
                    raise TraceParseError(f"{p.name}: {exc}") from exc
        runs.append(RunRecord(m["kind"], seed, plan, load))
    if not runs:
        raise DataError(f"no *_seed*.trace files in {directory}")
    runs.sort(key=lambda r: (MISBEHAVIOR_KINDS.index(r.kind), r.seed))
    return runs


def cmd_extract(args) -> int:
    cfg = load_config(args)
    runs = _trace_runs(Path(args.input or "traces"), set(cfg.seeds) if args.seeds else None)
    cfg = ExperimentConfig(**{**cfg.__dict__, "seeds": tuple(sorted({r.seed for r in runs})),
                              "kinds": tuple(k for k in MISBEHAVIOR_KINDS if any(r.kind == k for r in runs))})
    monitors = family_monitors((r.load() for r in runs), cfg.monitor_count)
    datasets = extract_family(cfg, runs, monitors, progress=log.info)
    out = Path(args.out or "datasets")
    out.mkdir(parents=True, exist_ok=True)
    for w, ds in datasets.items():
        save_dataset(ds, out / f"dataset_w{w:g}.tsv")
        excl = ", ".join(f"{k}={v}" for k, v in sorted(ds.excluded.items())) or "none"
        log.info("window %g: %d samples, excluded %s", w, len(ds), excl)
    return EXIT_OK


def _datasets(directory: Path, windows=None):
    if not directory.is_dir():
        raise DataError(f"dataset directory not found: {directory}")
    found = {}
    for path in directory.iterdir():
        m = DATASET_NAME.match(path.name)
        if m:
            found[float(m["w"])] = path
    wanted = sorted(found) if windows is None else list(windows)
    missing = [w for w in wanted if w not in found]
    if missing or not wanted:
        raise DataError(f"no dataset for window size(s) {missing or 'any'} in {directory}")
    return [load_dataset(found[w]) for w in wanted]


def _monitors(ds) -> list[int]:
    for line in ds.header:
        if line.startswith("# monitors "):
            return [int(x) for x in line.split()[2].split(",") if x]
    return sorted(set(ds.observer.tolist()))


def _provenance(ds, cfg: ExperimentConfig) -> list[str]:
    lines = [h for h in ds.header if h.startswith(("# config", "# seeds"))]
    return lines + [f"# evaluation config {cfg.digest()} n_folds {cfg.n_folds} "
                    f"selection_folds {cfg.inner_folds}"]


def cmd_train(args) -> int:
    cfg = load_config(args)
    mode = args.mode or "F2"
    if mode not in SINGLE_MODES:
        raise ConfigError(f"--mode must be one of {', '.join(SINGLE_MODES)}")
    data = _datasets(Path(args.input or "datasets"), parse_windows(args.window) if args.window else None)
    results = [evaluate_single(ds, mode, cfg, _monitors(ds)) for ds in data]
    _emit(single_report(results, _provenance(data[0], cfg)), args.out)
    return EXIT_OK


def cmd_cascade(args) -> int:
    cfg = load_config(args)
    data = _datasets(Path(args.input or "datasets"), parse_windows(args.window) if args.window else None)
    results = [evaluate_cascade(ds, cfg, _monitors(ds)) for ds in data]
    _emit(cascade_report(results, _provenance(data[0], cfg)), args.out)
    return EXIT_OK


def energy_outputs(fp_rates: dict, source: str, out: Path, duration: float = 3600.0,
                   header: list | None = None):
    """Write the trade-off table plus the two plot-data files; returns the table text."""
    out.mkdir(parents=True, exist_ok=True)
    head = "".join(h + "\n" for h in header or [])
    table = head + energy.energy_table(fp_rates).to_text(source)
    (out / "energy_table.tsv").write_text(table, encoding="utf-8")
    lines = ["window_size\ttime_s\twatchdog_mJ\tcostim_mJ"]
    for w in sorted(fp_rates):
        p = energy.EnergyParams(window_size=w)
        watch = energy.accumulate(duration, "watchdog", fp_rates[w], p)
        cost = energy.accumulate(duration, "costim", fp_rates[w], p)
        lines += [f"{w:g}\t{t:g}\t{a / 1000:.4f}\t{b / 1000:.4f}" for (t, a), (_, b) in zip(watch, cost)]
    (out / "energy_accumulated.tsv").write_text(head + "\n".join(lines) + "\n", encoding="utf-8")
    watchdog = energy.xi_f0(25) / 1000
    sweep = ["fp_rate_pct\tcostim_mJ\twatchdog_mJ"] + [
        f"{100 * fp:.1f}\t{xi / 1000:.4f}\t{watchdog:.4f}" for fp, xi in energy.fp_sweep()]
    (out / "energy_vs_fp.tsv").write_text(head + "\n".join(sweep) + "\n", encoding="utf-8")
    return table


def cmd_energy(args) -> int:
    mode = args.mode or "reference"
    header = []
    if mode == "reference":
        rates = dict(energy.REFERENCE_FP_RATES)
    elif mode == "measured":
        if not args.report:
            raise DataError("--mode measured needs --report pointing at a cascade report")
        rates = measured_fp_rates(args.report)
        comments, _ = read_report(args.report)
        header = [c for c in comments if c.startswith(("# config", "# seeds"))]
        header.append(f"# fp rates from {args.report}")
    else:
        raise ConfigError("--mode must be 'reference' or 'measured'")
    sys.stdout.write(energy_outputs(rates, mode, Path(args.out or "energy"), header=header))
    return EXIT_OK


def cmd_report(args) -> int:
    """End-to-end: simulate, extract, every single-classifier report, cascade, energy."""
    cfg = load_config(args)
    out = Path(args.out or "results")
    out.mkdir(parents=True, exist_ok=True)
    datasets, monitors, _ = run_family(cfg, progress=log.info)
    data = [datasets[w] for w in cfg.window_sizes]
    for ds in data:
        save_dataset(ds, out / f"dataset_w{ds.window_size:g}.tsv")
    prov = _provenance(data[0], cfg)
    for mode in SINGLE_MODES:
        results = [evaluate_single(ds, mode, cfg, monitors) for ds in data]
        (out / f"report_{mode}.tsv").write_text(single_report(results, prov), encoding="utf-8")
        log.info("wrote report_%s.tsv", mode)
    results = [evaluate_cascade(ds, cfg, monitors) for ds in data]
    (out / "report_cascade.tsv").write_text(cascade_report(results, prov), encoding="utf-8")
    energy_outputs(dict(energy.REFERENCE_FP_RATES), "reference", out / "energy_reference")
    energy_outputs(measured_fp_rates(out / "report_cascade.tsv"), "measured", out / "energy_measured",
                   cfg.scenario.sim_duration, prov)
    log.info("results in %s", out)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "extract": cmd_extract, "train": cmd_train,
            "cascade": cmd_cascade, "energy": cmd_energy, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="immunids", description="Misbehavior detection experiments on a simulated ad hoc network.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "run every (misbehavior kind, seed) and write traces",
        "extract": "build per-window-size datasets from a trace directory",
        "train": "evaluate one feature set per node with forward selection and CV",
        "cascade": "evaluate the two-stage cascade per node",
        "energy": "energy trade-off table and plot data",
        "report": "run every stage end to end",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("input", nargs="?", help="input directory (traces for extract, datasets for train/cascade)")
        p.add_argument("--config", help="YAML experiment or scenario file")
        p.add_argument("--window", help="comma-separated window sizes in seconds")
        p.add_argument("--seeds", help="seed list, e.g. 1-20 or 1,4,7")
        p.add_argument("--out", help="output file (train, cascade) or directory")
        p.add_argument("--mode", help="train: F0|F1|F2|f0; energy: reference|measured")
        if name == "energy":
            p.add_argument("--report", help="cascade report supplying measured FP rates")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, InfeasiblePlan) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, TraceParseError, DatasetParseError, ReportError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AssertionError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
