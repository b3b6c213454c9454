"""Per-window feature vectors computed from an observer's view of the trace.

Twenty-four features are computed for an observer ``s_i`` and its next hop
``s_{i+1}``: seven MAC features (M1-M7), twelve routing features (R1-R12)
and five transport features (T1-T5). Windows are non-overlapping, start at
``origin`` and only complete windows are kept.

Undefined values: when a window lacks the packets a ratio or delay needs,
M1-M4 and T2-T5 are NaN ("absent") and the sample is dropped from any
projection containing them. The RREP watchdog pair R3/R4 defaults to 1 and 0
when no RREP was sent in the window, and M4 is 0 when packets were sent but
none was seen forwarded (M3 = 0 already carries that signal).
"""
from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .netsim import trace as T
from .netsim.routing import RoutingTable, apply_event
from .netsim.scenario import NONE, MisbehaviorPlan

log = logging.getLogger(__name__)

FEATURES = ("M1", "M2", "M3", "M4", "M5", "M6", "M7",
            "R1", "R2", "R3", "R4", "R5", "R6", "R7", "R8", "R9", "R10", "R11", "R12",
            "T1", "T2", "T3", "T4", "T5")
IDX = {name: i for i, name in enumerate(FEATURES)}
PROMISCUOUS = ("M3", "M4", "M7", "R1", "R2", "R3", "R4")
FEATURE_SETS = {
    "f0": FEATURES,
    "f1": tuple(f for f in FEATURES if f not in PROMISCUOUS),
}
FEATURE_SETS["f2"] = tuple(f for f in FEATURE_SETS["f1"] if f != "M1")
COMPOSITE = {"F0": "f0", "F1": "f1", "F2": "f2"}


@dataclass(frozen=True)
class WindowSpec:
    window_size: float
    origin: float = 0.0

    def __post_init__(self):
        if self.window_size <= 0:
            raise ValueError("window_size must be positive")

    def count(self, duration: float) -> int:
        return max(int(math.floor((duration - self.origin) / self.window_size + 1e-9)), 0)

    def index(self, t: np.ndarray) -> np.ndarray:
        return np.floor((np.asarray(t) - self.origin) / self.window_size).astype(np.int64)


@dataclass
class LocalFeatureSample:
    observer: int
    neighbor: int | None
    window_index: int
    values: np.ndarray
    traffic_present: bool
    pcts_tx: int = 0
    pcts_rx: int = 0

    def __getitem__(self, name: str) -> float:
        return float(self.values[IDX[name]])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(FEATURES, self.values.tolist()))


def feature_names(set_id: str, suffix: str = "") -> list[str]:
    if set_id in COMPOSITE:
        base = FEATURE_SETS[COMPOSITE[set_id]]
        return [f + "_L" for f in base] + [f + "_R" for f in base]
    return [f + suffix for f in FEATURE_SETS[set_id]]


def project(sample, set_id: str) -> np.ndarray:
    """Values of ``sample`` restricted to a feature subset, in canonical order.

    ``sample`` may be a :class:`LocalFeatureSample`, a name->value mapping, or
    a vector laid out in canonical order over any superset of the subset.
    """
    names = FEATURE_SETS[set_id]
    if isinstance(sample, LocalFeatureSample):
        return sample.values[[IDX[f] for f in names]]
    if isinstance(sample, dict):
        return np.array([sample[f] for f in names], dtype=float)
    vec = np.asarray(sample, dtype=float)
    for sid in ("f0", "f1", "f2"):
        if len(vec) == len(FEATURE_SETS[sid]):
            pos = {f: i for i, f in enumerate(FEATURE_SETS[sid])}
            missing = [f for f in names if f not in pos]
            if missing:
                raise ValueError(f"{sid} vector lacks {missing}")
            return vec[[pos[f] for f in names]]
    raise ValueError(f"cannot project a {len(vec)}-entry vector")


class NegativeCostimulation(LookupError):
    """The remote feature report for a window never arrived."""


@dataclass(frozen=True)
class CompositeVector:
    set_id: str
    values: np.ndarray
    names: tuple[str, ...]
    window_index: int | None = None

    def __len__(self):
        return len(self.values)


def compose(local, remote, set_id: str) -> CompositeVector:
    """Concatenate local then remote vectors of the same window (``F = f_L ∘ f_R``)."""
    if remote is None:
        raise NegativeCostimulation("remote feature report missing")
    base = COMPOSITE[set_id]
    w_local = getattr(local, "window_index", None)
    w_remote = getattr(remote, "window_index", None)
    if w_local is not None and w_remote is not None and w_local != w_remote:
        raise ValueError(f"window mismatch: local {w_local} vs remote {w_remote}")
    lv, rv = project(local, base), project(remote, base)
    return CompositeVector(set_id, np.concatenate([lv, rv]), tuple(feature_names(set_id)), w_local)


# -- trace views ---------------------------------------------------------------

class ObserverView:
    """One node's events, pre-split into the arrays the features consume."""

    def __init__(self, trace: T.EventTrace, observer: int, events: np.ndarray | None = None):
        self.observer = observer
        self.duration = trace.duration
        ev = trace.events[trace.events["observer"] == observer] if events is None else events
        self.events = ev
        csrc, cdst = trace.connection_arrays()
        self.csrc, self.cdst = csrc, cdst
        k, pid, src = ev["event_kind"], ev["packet_id"], ev["src"]
        mine = src == observer
        data = pid > 0

        def pick(mask):
            return ev[mask]

        self.sends = pick((k == T.SEND) & mine & data)
        self.recvs = pick((k == T.RECEIVE) & data)
        self.overheard = pick((k == T.OVERHEAR) & data)
        self.overheard_ctrl = pick((k == T.OVERHEAR) & ~data)
        self.rts = pick((k == T.RTS) & data)
        self.acks = pick((k == T.ACK) & data)
        self.backoffs = pick((k == T.BACKOFF) & data)
        self.rreq_sent = pick((k == T.RREQ) & mine)
        self.rrep_sent = pick((k == T.RREP) & mine)
        self.rerr_sent = pick((k == T.RERR) & mine)
        self.ctrl_received = pick(np.isin(k, (T.RREQ, T.RREP, T.RERR)) & ~mine)
        self._routing = ev[np.isin(k, (T.RREQ, T.RREP, T.RERR, T.SEND, T.RECEIVE))]
        self._snapshots: dict[float, tuple] = {}

    def origin_of(self, cids):
        return self.csrc[cids]

    def dest_of(self, cids):
        return self.cdst[cids]

    def route_snapshots(self, times) -> np.ndarray:
        """Routing-table summary (R5, R7, R8, R9, R12) at each of ``times``."""
        times = [float(t) for t in times]
        todo = sorted(t for t in set(times) if t not in self._snapshots)
        if todo:
            table = RoutingTable()
            ev = self._routing
            i, n = 0, len(ev)
            ts, ks, srcs, seqs, cids = (ev["timestamp"].tolist(), ev["event_kind"].tolist(),
                                        ev["src"].tolist(), ev["seq_number"].tolist(),
                                        ev["connection_id"].tolist())
            csrc, cdst = self.csrc, self.cdst
            for t_end in todo:
                while i < n and ts[i] < t_end:
                    c = cids[i]
                    apply_event(table, self.observer, ks[i], srcs[i], seqs[i],
                                int(csrc[c]), int(cdst[c]), ts[i])
                    i += 1
                self._snapshots[t_end] = table.snapshot(t_end)
        return np.array([self._snapshots[t] for t in times], dtype=float).reshape(len(times), 5)


def _bincount(idx, n, weights=None):
    ok = (idx >= 0) & (idx < n)
    w = None if weights is None else np.asarray(weights, dtype=float)[ok]
    return np.bincount(idx[ok], weights=w, minlength=n)[:n].astype(float)


def _distinct_per_window(win, keys, n):
    ok = (win >= 0) & (win < n)
    if not ok.any():
        return np.zeros(n)
    pairs = np.unique(np.column_stack([win[ok], keys[ok]]), axis=0)
    return np.bincount(pairs[:, 0], minlength=n)[:n].astype(float)


def _interarrival(win, t, group, n):
    """Per-window (mean, variance) of consecutive arrival gaps within each group,
    averaged over groups; NaN where no group has enough gaps."""
    order = np.lexsort((t, group, win))
    w, tt, g = win[order], t[order], group[order]
    same = (w[1:] == w[:-1]) & (g[1:] == g[:-1]) & (w[1:] >= 0) & (w[1:] < n)
    gaps = (tt[1:] - tt[:-1])[same]
    gw, gg = w[1:][same], g[1:][same]
    mean_out = np.full(n, np.nan)
    var_out = np.full(n, np.nan)
    if gaps.size == 0:
        return mean_out, var_out
    keys, inv = np.unique(np.column_stack([gw, gg]), axis=0, return_inverse=True)
    inv = inv.ravel()
    cnt = np.bincount(inv).astype(float)
    mean = np.bincount(inv, weights=gaps) / cnt
    sq = np.bincount(inv, weights=(gaps - mean[inv]) ** 2)
    with np.errstate(invalid="ignore", divide="ignore"):
        var = np.where(cnt >= 2, sq / (cnt - 1), np.nan)
    kw = keys[:, 0]
    m_sum = np.bincount(kw, weights=mean, minlength=n)[:n]
    m_cnt = np.bincount(kw, minlength=n)[:n]
    has_var = ~np.isnan(var)
    v_sum = np.bincount(kw[has_var], weights=var[has_var], minlength=n)[:n]
    v_cnt = np.bincount(kw[has_var], minlength=n)[:n]
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_out = np.where(m_cnt > 0, m_sum / np.maximum(m_cnt, 1), np.nan)
        var_out = np.where(v_cnt > 0, v_sum / np.maximum(v_cnt, 1), np.nan)
    return mean_out, var_out


def node_features(view: ObserverView, spec: WindowSpec) -> np.ndarray:
    """(n_windows, 24) matrix of the neighbour-independent features; M1-M4 NaN."""
    n = spec.count(view.duration)
    W = spec.window_size
    out = np.full((n, len(FEATURES)), np.nan)
    if n == 0:
        return out
    me = view.observer

    s = view.sends
    s_win = spec.index(s["timestamp"])
    forwarded = view.origin_of(s["connection_id"]) != me
    out[:, IDX["M5"]] = _bincount(s_win[forwarded], n, 8.0 * s["size"][forwarded]) / W
    r = view.recvs
    r_win = spec.index(r["timestamp"])
    partners_win = np.concatenate([s_win, r_win])
    partners = np.concatenate([s["dst_mac"], r["src"]]).astype(np.int64)
    out[:, IDX["M6"]] = _distinct_per_window(partners_win, partners, n)
    o = view.overheard
    out[:, IDX["M7"]] = _distinct_per_window(spec.index(o["timestamp"]), o["dst_mac"].astype(np.int64), n)

    q = view.rreq_sent
    q_fwd = view.origin_of(q["connection_id"]) != me
    out[:, IDX["R1"]] = _distinct_per_window(spec.index(q["timestamp"])[q_fwd], q["packet_id"][q_fwd], n) / W
    e = view.rerr_sent
    out[:, IDX["R2"]] = _distinct_per_window(spec.index(e["timestamp"]), e["packet_id"], n) / W
    out[:, IDX["R3"]] = 1.0
    out[:, IDX["R4"]] = 0.0
    out[:, IDX["R6"]] = _bincount(spec.index(view.ctrl_received["timestamp"]), n) / W
    out[:, IDX["R10"]] = _distinct_per_window(s_win[forwarded], s["connection_id"][forwarded].astype(np.int64), n)
    p = view.rrep_sent
    p_fwd = view.dest_of(p["connection_id"]) != me
    out[:, IDX["R11"]] = _distinct_per_window(spec.index(p["timestamp"])[p_fwd], p["packet_id"][p_fwd], n) / W
    ends = spec.origin + W * np.arange(1, n + 1)
    snap = view.route_snapshots(ends)
    for j, name in enumerate(("R5", "R7", "R8", "R9", "R12")):
        out[:, IDX[name]] = snap[:, j]

    # out-of-order counting carries the previous sequence number across windows
    cids = r["connection_id"].astype(np.int64)
    seqs = r["seq_number"]
    order = np.lexsort((r["timestamp"], cids))
    c_o, s_o = cids[order], seqs[order]
    ooo = np.zeros(len(r), dtype=bool)
    if len(r) > 1:
        ooo[order[1:]] = (c_o[1:] == c_o[:-1]) & (s_o[1:] - 1 != s_o[:-1])
    out[:, IDX["T1"]] = _bincount(r_win[ooo], n) / W
    t_mean, t_var = _interarrival(r_win, r["timestamp"], cids, n)
    out[:, IDX["T2"]], out[:, IDX["T3"]] = t_mean, t_var
    g_mean, g_var = _interarrival(r_win, r["timestamp"], np.zeros(len(r), dtype=np.int64), n)
    out[:, IDX["T4"]], out[:, IDX["T5"]] = g_mean, g_var
    return out


def link_features(view: ObserverView, neighbor: int, spec: WindowSpec, base: np.ndarray):
    """Fill the neighbour-specific M1-M4 and R3/R4 into a copy of ``base``.

    Returns ``(matrix, pcts_tx, traffic)`` where ``traffic`` marks windows in
    which the observer sent data to ``neighbor``.
    """
    n = len(base)
    out = base.copy()
    rts = view.rts[view.rts["dst_mac"] == neighbor]
    # a packet belongs to the window of its first RTS
    pids, first = np.unique(rts["packet_id"], return_index=True)
    rts_count = np.unique(rts["packet_id"], return_counts=True)[1]
    p_win = spec.index(rts["timestamp"][first])
    acked = np.isin(pids, view.acks["packet_id"][view.acks["src"] == neighbor])
    bo_pids, bo_counts = np.unique(view.backoffs["packet_id"], return_counts=True)
    bo = np.zeros(len(pids))
    if len(bo_pids):
        pos = np.searchsorted(bo_pids, pids)
        hit = (pos < len(bo_pids)) & (bo_pids[np.minimum(pos, len(bo_pids) - 1)] == pids)
        bo[hit] = bo_counts[pos[hit]]
    pcts = _bincount(p_win, n)
    with np.errstate(invalid="ignore", divide="ignore"):
        out[:, IDX["M1"]] = np.where(pcts > 0, _bincount(p_win, n, acked / rts_count) / pcts, np.nan)
        out[:, IDX["M2"]] = np.where(pcts > 0, _bincount(p_win, n, bo) / pcts, np.nan)

    s = view.sends[view.sends["dst_mac"] == neighbor]
    s_win = spec.index(s["timestamp"])
    traffic = _bincount(s_win, n) > 0
    # tunnelled frames have no handshake; they still count as traffic
    pcts = np.maximum(pcts, _bincount(s_win, n))

    def watchdog(sent, overheard, exclude):
        keep = ~exclude
        sent = sent[keep]
        w = spec.index(sent["timestamp"])
        ov = overheard[overheard["src"] == neighbor]
        ov_pids, ov_first = np.unique(ov["packet_id"], return_index=True)
        pos = np.searchsorted(ov_pids, sent["packet_id"])
        pos_c = np.minimum(pos, max(len(ov_pids) - 1, 0))
        seen = (pos < len(ov_pids)) & (ov_pids[pos_c] == sent["packet_id"]) if len(ov_pids) else \
            np.zeros(len(sent), dtype=bool)
        delay = np.where(seen, ov["timestamp"][ov_first][pos_c] - sent["timestamp"] if len(ov_pids)
                         else 0.0, 0.0)
        total = _bincount(w, n)
        fwd = _bincount(w[seen], n)
        dsum = _bincount(w[seen], n, delay[seen])
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(total > 0, fwd / np.maximum(total, 1), np.nan)
            mean_delay = np.where(total > 0, np.where(fwd > 0, dsum / np.maximum(fwd, 1), 0.0), np.nan)
        return ratio, mean_delay, total

    m3, m4, _ = watchdog(s, view.overheard, view.dest_of(s["connection_id"]) == neighbor)
    out[:, IDX["M3"]], out[:, IDX["M4"]] = m3, m4
    p = view.rrep_sent[view.rrep_sent["dst_mac"] == neighbor]
    r3, r4, total = watchdog(p, view.overheard_ctrl, view.origin_of(p["connection_id"]) == neighbor)
    out[:, IDX["R3"]] = np.where(total > 0, r3, 1.0)
    out[:, IDX["R4"]] = np.where(total > 0, r4, 0.0)
    return out, pcts, traffic


def extract_features(trace, observer: int, neighbor: int | None, spec: WindowSpec,
                     view: ObserverView | None = None) -> list[LocalFeatureSample]:
    """One sample per complete window; ``traffic_present`` is False where the
    observer sent no data to ``neighbor``. With ``neighbor=None`` the
    neighbour-specific features stay absent."""
    view = view or ObserverView(trace, observer)
    base = node_features(view, spec)
    rx = _bincount(spec.index(view.recvs["timestamp"]), len(base))
    if neighbor is None:
        mat, pcts, traffic = base, np.zeros(len(base)), np.zeros(len(base), dtype=bool)
    else:
        mat, pcts, traffic = link_features(view, neighbor, spec, base)
    return [LocalFeatureSample(observer, neighbor, w, mat[w], bool(traffic[w]), int(pcts[w]), int(rx[w]))
            for w in range(len(base))]


# -- labels and monitor selection ---------------------------------------------

def label_for(plan: MisbehaviorPlan, neighbor: int | None) -> str:
    if plan.kind == NONE or neighbor is None:
        return "normal"
    return plan.kind if plan.misbehaving(neighbor) else "normal"


@dataclass
class LabeledSample:
    vector: np.ndarray
    label: str
    observer: int
    neighbor: int | None
    window_index: int


def label_dataset(samples, plan: MisbehaviorPlan, windows=None) -> list[LabeledSample]:
    """Attach class labels: the misbehavior kind iff the next hop misbehaved.

    The plan is static for a run, so every window in which the next hop is a
    planned dropper/delayer or a wormhole endpoint carries that class.
    ``windows`` optionally restricts the output to those window indices.
    """
    keep = None if windows is None else set(windows)
    out = []
    for s in samples:
        if keep is not None and s.window_index not in keep:
            continue
        vec = s.values if isinstance(s, LocalFeatureSample) else np.asarray(s.values)
        out.append(LabeledSample(vec, label_for(plan, s.neighbor), s.observer, s.neighbor, s.window_index))
    return out


def forwarding_counts(trace: T.EventTrace) -> Counter:
    ev = trace.events
    csrc, _ = trace.connection_arrays()
    m = (ev["event_kind"] == T.SEND) & (ev["packet_id"] > 0) & (ev["src"] == ev["observer"])
    m &= csrc[ev["connection_id"].clip(0)] != ev["observer"]
    return Counter(ev["observer"][m].tolist())


def observed_degrees(trace: T.EventTrace) -> Counter:
    """Distinct transmitters each node heard directly (tunnels excluded)."""
    ev = trace.events
    m = np.isin(ev["event_kind"], (T.RECEIVE, T.OVERHEAR, T.RREQ)) & (ev["src"] != ev["observer"])
    pairs = np.unique(np.column_stack([ev["observer"][m], ev["src"][m]]), axis=0)
    return Counter(pairs[:, 0].tolist())


def rank_monitors(counts: Counter, degrees, k: int) -> list[int]:
    """Top-``k`` forwarders by count; equal counts are resolved in favour of
    degrees not yet represented (greedy max-spread), then by node id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    deg = Counter(degrees)
    remaining = {n for n, c in counts.items() if c > 0}
    if len(remaining) < k:
        log.warning("only %d forwarding nodes available for %d monitors", len(remaining), k)
    chosen: list[int] = []
    while remaining and len(chosen) < k:
        top = max(counts[n] for n in remaining)
        tied = [n for n in remaining if counts[n] == top]
        picked = [deg[c] for c in chosen]
        best = min(tied, key=lambda n: (-min((abs(deg[n] - d) for d in picked), default=0), n))
        chosen.append(best)
        remaining.discard(best)
    return chosen


def select_monitor_nodes(traces, k: int, degrees=None) -> list[int]:
    """Monitors for a run family: the nodes forwarding the most data overall."""
    if isinstance(traces, T.EventTrace):
        traces = [traces]
    counts: Counter = Counter()
    deg: Counter = Counter()
    for tr in traces:
        counts.update(forwarding_counts(tr))
        for node, d in observed_degrees(tr).items():
            deg[node] = max(deg[node], d)
    return rank_monitors(counts, deg if degrees is None else degrees, k)
