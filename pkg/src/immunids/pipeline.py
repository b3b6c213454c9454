"""Run families, per-run feature extraction and the dataset file format."""
from __future__ import annotations

import hashlib
import json
import logging
import math
import tempfile
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .features import (COMPOSITE, FEATURE_SETS, FEATURES, IDX, ObserverView, WindowSpec,
                       forwarding_counts, label_for, link_features, node_features,
                       observed_degrees, rank_monitors)
from .netsim import (MISBEHAVIOR_KINDS, ConfigError, MisbehaviorPlan, ScenarioConfig,
                     generate_connections, run_simulation)
from .netsim import trace as T

log = logging.getLogger(__name__)

WINDOW_SIZES = (50.0, 100.0, 250.0, 500.0)
DATASET_MAGIC = "# immunids dataset v1"


@dataclass
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    window_sizes: tuple = WINDOW_SIZES
    monitor_count: int = 20
    n_folds: int = 20
    selection_folds: int | None = None
    seeds: tuple = tuple(range(1, 21))
    kinds: tuple = MISBEHAVIOR_KINDS
    min_leaf: int = 5
    max_depth: int | None = 25

    def __post_init__(self):
        self.window_sizes = tuple(float(w) for w in self.window_sizes)
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise ConfigError("seed list is empty")
        if any(w <= 0 for w in self.window_sizes):
            raise ConfigError("window sizes must be positive")
        if self.monitor_count < 1 or self.n_folds < 2:
            raise ConfigError("monitor_count must be >= 1 and n_folds >= 2")
        if self.selection_folds is not None and self.selection_folds < 2:
            raise ConfigError("selection_folds must be >= 2")
        unknown = set(self.kinds) - set(MISBEHAVIOR_KINDS)
        if unknown:
            raise ConfigError(f"unknown misbehavior kind(s): {sorted(unknown)}")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        """Either a bare scenario mapping, or experiment keys with a nested ``scenario``."""
        data = dict(data)
        if "scenario" not in data:
            return cls(scenario=ScenarioConfig.from_dict(data))
        scenario = ScenarioConfig.from_dict(data.pop("scenario") or {})
        known = {f for f in cls.__dataclass_fields__ if f != "scenario"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown experiment key(s): {', '.join(sorted(unknown))}")
        try:
            return cls(scenario=scenario, **data)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must contain a mapping")
        return cls.from_dict(data)

    @property
    def inner_folds(self) -> int:
        return self.selection_folds or self.n_folds

    def digest(self) -> str:
        payload = {k: v for k, v in self.__dict__.items() if k != "scenario"}
        payload["scenario"] = self.scenario.as_dict()
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:12]

    def provenance(self) -> list[str]:
        """Header lines every report carries."""
        return [f"# config {self.digest()} scenario {self.scenario.digest()}",
                f"# seeds {','.join(map(str, self.seeds))}"]


def run_name(kind: str, seed: int) -> str:
    return f"{kind}_seed{seed}"


def simulate(scenario: ScenarioConfig, kind: str, seed: int, topology=None):
    """One simulation run; the topology is fixed by the scenario seed, the rest by ``seed``."""
    topology = topology or scenario.topology()
    plan = scenario.plan(topology, kind, seed)
    conns = generate_connections(topology, scenario.connections_spec(), plan, scenario.sim_duration, seed)
    trace = run_simulation(topology, conns, plan, scenario.sim_duration, seed)
    return trace, plan


def plan_to_json(plan: MisbehaviorPlan) -> str:
    return json.dumps({"kind": plan.kind, "affected_nodes": sorted(plan.affected_nodes),
                       "drop_or_delay_prob": plan.drop_or_delay_prob,
                       "delay_amount": plan.delay_amount,
                       "wormholes": [list(w) for w in plan.wormholes]}, sort_keys=True)


def plan_from_json(text: str) -> MisbehaviorPlan:
    d = json.loads(text)
    return MisbehaviorPlan(d["kind"], frozenset(d["affected_nodes"]), d["drop_or_delay_prob"],
                           d["delay_amount"], tuple(tuple(w) for w in d["wormholes"]))


# -- datasets --------------------------------------------------------------------

LOCAL_COLUMNS = [f + "_L" for f in FEATURES]
REMOTE_COLUMNS = [f + "_R" for f in FEATURES]
META = ("observer", "neighbor", "window_index", "window_size", "run")


@dataclass
class Dataset:
    """All labeled windows of one window size. Remote values are NaN where the
    downstream report is missing; projections drop rows with absent values."""

    window_size: float
    observer: np.ndarray
    neighbor: np.ndarray
    window_index: np.ndarray
    run: np.ndarray
    local: np.ndarray
    remote: np.ndarray
    labels: np.ndarray
    excluded: Counter = field(default_factory=Counter)
    header: list = field(default_factory=list)

    def __len__(self):
        return len(self.labels)

    @classmethod
    def empty(cls, window_size):
        z = np.zeros(0, dtype=np.int64)
        return cls(float(window_size), z, z, z, z, np.zeros((0, 24)), np.zeros((0, 24)),
                   np.zeros(0, dtype=object))

    def subset(self, mask) -> "Dataset":
        return Dataset(self.window_size, self.observer[mask], self.neighbor[mask],
                       self.window_index[mask], self.run[mask], self.local[mask],
                       self.remote[mask], self.labels[mask], Counter(self.excluded), list(self.header))

    def for_observer(self, node) -> "Dataset":
        return self.subset(self.observer == node)

    def features(self, set_id: str) -> np.ndarray:
        """All rows projected on a local subset (f0/f1/f2) or a composite (F0/F1/F2)."""
        if set_id in COMPOSITE:
            cols = [IDX[f] for f in FEATURE_SETS[COMPOSITE[set_id]]]
            return np.hstack([self.local[:, cols], self.remote[:, cols]])
        return self.local[:, [IDX[f] for f in FEATURE_SETS[set_id]]]

    def matrix(self, set_id: str):
        """``(X, y, kept)`` restricted to rows with every value present."""
        X = self.features(set_id)
        kept = ~np.isnan(X).any(axis=1)
        return X[kept], self.labels[kept], kept

    @staticmethod
    def concat(parts: list["Dataset"]) -> "Dataset":
        if not parts:
            raise ValueError("nothing to concatenate")
        sizes = {p.window_size for p in parts}
        if len(sizes) != 1:
            raise ValueError(f"mixed window sizes {sorted(sizes)}")
        excluded = Counter()
        for p in parts:
            excluded.update(p.excluded)
        cat = np.concatenate
        return Dataset(parts[0].window_size, cat([p.observer for p in parts]),
                       cat([p.neighbor for p in parts]), cat([p.window_index for p in parts]),
                       cat([p.run for p in parts]), np.vstack([p.local for p in parts]),
                       np.vstack([p.remote for p in parts]), cat([p.labels for p in parts]),
                       excluded, list(parts[0].header))


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else repr(float(x))


def write_dataset(ds: Dataset, fh) -> None:
    fh.write(DATASET_MAGIC + "\n")
    for line in ds.header:
        fh.write(line.rstrip("\n") + "\n")
    fh.write(f"# window_size\t{ds.window_size!r}\n")
    for reason, count in sorted(ds.excluded.items()):
        fh.write(f"# excluded\t{reason}\t{count}\n")
    fh.write("\t".join((*META, *LOCAL_COLUMNS, *REMOTE_COLUMNS, "label")) + "\n")
    for i in range(len(ds)):
        meta = (ds.observer[i], ds.neighbor[i], ds.window_index[i])
        vals = [_fmt(v) for v in ds.local[i]] + [_fmt(v) for v in ds.remote[i]]
        fh.write("\t".join([*map(str, meta), repr(ds.window_size), str(ds.run[i]), *vals,
                            str(ds.labels[i])]) + "\n")


class DatasetParseError(ValueError):
    pass


def read_dataset(fh) -> Dataset:
    first = fh.readline().rstrip("\n")
    if first != DATASET_MAGIC:
        raise DatasetParseError(f"line 1: not a dataset file ({first[:40]!r})")
    header, excluded = [], Counter()
    window = None
    columns = "\t".join((*META, *LOCAL_COLUMNS, *REMOTE_COLUMNS, "label"))
    rows = []
    lineno = 1
    seen_columns = False
    for line in fh:
        lineno += 1
        line = line.rstrip("\n")
        if not seen_columns:
            if line.startswith("# window_size"):
                window = float(line.split("\t")[1])
            elif line.startswith("# excluded"):
                _, reason, count = line.split("\t")
                excluded[reason] = int(count)
            elif line == columns:
                seen_columns = True
            elif line.startswith("#"):
                header.append(line)
            else:
                raise DatasetParseError(f"line {lineno}: unexpected header line {line[:40]!r}")
            continue
        p = line.split("\t")
        if len(p) != len(META) + 49:
            raise DatasetParseError(f"line {lineno}: expected {len(META) + 49} fields, got {len(p)}")
        try:
            rows.append((int(p[0]), int(p[1]), int(p[2]), int(p[4]),
                         [float(v) for v in p[5:53]], p[53]))
        except ValueError as exc:
            raise DatasetParseError(f"line {lineno}: {exc}") from exc
    if window is None or not seen_columns:
        raise DatasetParseError("missing window size or column header")
    ds = Dataset.empty(window)
    ds.excluded, ds.header = excluded, header
    if rows:
        meta = np.array([r[:4] for r in rows], dtype=np.int64)
        vals = np.array([r[4] for r in rows], dtype=float)
        ds = Dataset(window, meta[:, 0], meta[:, 1], meta[:, 2], meta[:, 3], vals[:, :24],
                     vals[:, 24:], np.array([r[5] for r in rows], dtype=object), excluded, header)
    return ds


def save_dataset(ds: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        write_dataset(ds, fh)


def load_dataset(path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        return read_dataset(fh)


# -- extraction ------------------------------------------------------------------

def _mode(values):
    if not values:
        return None
    counts = Counter(values)
    return min(counts, key=lambda v: (-counts[v], v))


class RunExtractor:
    """Feature extraction for one trace, caching per-node views and matrices."""

    def __init__(self, trace: T.EventTrace):
        self.trace = trace
        self.groups = trace.by_observer()
        self._views: dict[int, ObserverView] = {}
        self._base: dict[tuple, np.ndarray] = {}
        self._links: dict[tuple, tuple] = {}
        self._next: dict[int, dict] = {}

    def view(self, node) -> ObserverView:
        if node not in self._views:
            ev = self.groups.get(node, np.zeros(0, dtype=T.EVENT_DTYPE))
            self._views[node] = ObserverView(self.trace, node, ev)
        return self._views[node]

    def base(self, node, spec):
        key = (node, spec)
        if key not in self._base:
            self._base[key] = node_features(self.view(node), spec)
        return self._base[key]

    def link(self, node, neighbor, spec):
        key = (node, neighbor, spec)
        if key not in self._links:
            if neighbor is None:
                base = self.base(node, spec)
                self._links[key] = (base, np.zeros(len(base), dtype=bool))
            else:
                mat, _, traffic = link_features(self.view(node), neighbor, spec, self.base(node, spec))
                self._links[key] = (mat, traffic)
        return self._links[key]

    def next_hops(self, node) -> dict:
        """packet id -> MAC receiver of ``node``'s data transmissions."""
        if node not in self._next:
            s = self.view(node).sends
            self._next[node] = dict(zip(s["packet_id"].tolist(), s["dst_mac"].tolist()))
        return self._next[node]

    def extract(self, observers, spec: WindowSpec, plan: MisbehaviorPlan, run_id: int) -> Dataset:
        rows_meta, local, remote, labels = [], [], [], []
        excluded = Counter()
        for m in observers:
            sends = self.view(m).sends
            win = spec.index(sends["timestamp"])
            for v in sorted(set(sends["dst_mac"].tolist())):
                mat, traffic = self.link(m, v, spec)
                excluded["no_traffic"] += int((~traffic).sum())
                mine = sends["dst_mac"] == v
                pid_by_win: dict[int, list] = {}
                for w, p in zip(win[mine].tolist(), sends["packet_id"][mine].tolist()):
                    pid_by_win.setdefault(w, []).append(p)
                hop_v = self.next_hops(v)
                s2_last = None
                s3_last: dict = {}
                label = label_for(plan, v)
                for w in np.flatnonzero(traffic).tolist():
                    pids = pid_by_win.get(w, [])
                    s2 = _mode([hop_v[p] for p in pids if p in hop_v]) or s2_last
                    s2_last = s2
                    r = np.full(len(FEATURES), np.nan)
                    if s2 is None:
                        excluded["remote_missing"] += 1
                    else:
                        hop_2 = self.next_hops(s2)
                        s3 = _mode([hop_2[p] for p in pids if p in hop_2]) or s3_last.get(s2)
                        s3_last[s2] = s3
                        r = self.link(s2, s3, spec)[0][w]
                    rows_meta.append((m, v, w, run_id))
                    local.append(mat[w])
                    remote.append(r)
                    labels.append(label)
        if not rows_meta:
            ds = Dataset.empty(spec.window_size)
            ds.excluded = excluded
            return ds
        meta = np.array(rows_meta, dtype=np.int64)
        return Dataset(spec.window_size, meta[:, 0], meta[:, 1], meta[:, 2], meta[:, 3],
                       np.array(local), np.array(remote), np.array(labels, dtype=object), excluded)


def extract_run(trace, plan, run_id, observers, window_sizes=WINDOW_SIZES) -> dict[float, Dataset]:
    ex = RunExtractor(trace)
    return {float(w): ex.extract(observers, WindowSpec(float(w)), plan, run_id) for w in window_sizes}


@dataclass
class RunRecord:
    kind: str
    seed: int
    plan: MisbehaviorPlan
    load: object  # zero-argument callable returning the run's EventTrace

    @property
    def name(self) -> str:
        return run_name(self.kind, self.seed)


def family_monitors(traces, k: int) -> list[int]:
    """Monitors over a family: accumulate forwarding counts and degrees over ``traces``."""
    counts, degrees = Counter(), Counter()
    for trace in traces:
        counts.update(forwarding_counts(trace))
        for node, d in observed_degrees(trace).items():
            degrees[node] = max(degrees[node], d)
    return rank_monitors(counts, degrees, k)


def extract_family(cfg: ExperimentConfig, runs: list[RunRecord], monitors, progress=None):
    """Datasets for every window size, one run id per position in ``runs``."""
    parts: dict[float, list] = {w: [] for w in cfg.window_sizes}
    for run_id, rec in enumerate(runs):
        for w, ds in extract_run(rec.load(), rec.plan, run_id, monitors, cfg.window_sizes).items():
            parts[w].append(ds)
        if progress:
            progress(f"extracted {rec.name}")
    header = cfg.provenance() + [f"# runs {','.join(r.name for r in runs)}",
                                 f"# monitors {','.join(map(str, monitors))}"]
    out = {}
    for w, ps in parts.items():
        ds = Dataset.concat(ps)
        ds.header = header
        out[w] = ds
    return out


def run_family(cfg: ExperimentConfig, workdir=None, progress=None):
    """Simulate every (kind, seed), pick monitors, and extract datasets.

    Traces are cached as binary files in ``workdir`` between the monitor
    selection pass and the extraction pass so memory stays bounded.
    Returns ``({window: Dataset}, monitors, run_names)``.
    """
    tmp = None
    if workdir is None:
        tmp = tempfile.TemporaryDirectory(prefix="immunids-")
        workdir = tmp.name
    workdir = Path(workdir)
    topology = cfg.scenario.topology()
    runs: list[RunRecord] = []
    try:
        def simulated():
            for kind in cfg.kinds:
                for seed in cfg.seeds:
                    trace, plan = simulate(cfg.scenario, kind, seed, topology)
                    path = workdir / (run_name(kind, seed) + ".npz")
                    T.save_binary(trace, path)
                    runs.append(RunRecord(kind, seed, plan, lambda p=path: T.load_binary(p)))
                    if progress:
                        progress(f"simulated {run_name(kind, seed)}: {len(trace)} events")
                    yield trace

        monitors = family_monitors(simulated(), cfg.monitor_count)
        datasets = extract_family(cfg, runs, monitors, progress)
    finally:
        if tmp is not None:
            tmp.cleanup()
    return datasets, monitors, [r.name for r in runs]
