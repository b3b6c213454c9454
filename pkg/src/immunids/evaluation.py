"""Per-node training and evaluation, CI95 aggregation across nodes, and the
tabular reports produced from them."""
from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
from sklearn.base import clone

from .costim import CascadeClassifier
from .features import feature_names
from .learn import (ANY, NORMAL, DecisionTree, Metrics, ci95, cross_val_labels, evaluate,
                    feature_weights, forward_selection, stratified_kfold)
from .pipeline import Dataset, ExperimentConfig

log = logging.getLogger(__name__)

WEIGHT_REPORT_THRESHOLD = 0.25
CLASS_ORDER = ("normal", "dropping", "delaying", "wormhole", ANY)


def _usable(X, y, node, min_members=2):
    """Drop classes too small to stratify; None if fewer than two classes remain."""
    counts = Counter(y.tolist())
    small = sorted(c for c, n in counts.items() if n < min_members)
    if small:
        log.warning("node %s: skipping class(es) %s with < %d samples", node, small, min_members)
        keep = ~np.isin(y, small)
        X, y = X[keep], y[keep]
    if len(set(y.tolist())) < 2:
        log.warning("node %s: fewer than two classes, node skipped", node)
        return None
    return X, y


@dataclass
class NodeOutcome:
    node: int
    selected: list
    residual_error: float
    metrics: Metrics
    n_samples: int


def _inducer(cfg: ExperimentConfig):
    return DecisionTree(min_leaf=cfg.min_leaf, max_depth=cfg.max_depth)


def train_node(X, y, names, cfg: ExperimentConfig, node=None, seed=0) -> NodeOutcome | None:
    """Forward selection, then cross-validated predictions on the chosen subset."""
    data = _usable(np.asarray(X, dtype=float), np.asarray(y, dtype=object), node)
    if data is None:
        return None
    X, y = data
    est = _inducer(cfg)
    selected, residual = forward_selection(X, y, est, cfg.inner_folds, seed)
    folds = stratified_kfold(y, cfg.n_folds, seed)
    pred = cross_val_labels(est, X[:, sorted(selected)], y, folds)
    return NodeOutcome(node, [names[j] for j in selected], residual, evaluate(pred, y), len(y))


@dataclass
class RateCI:
    mean: float
    halfwidth: float
    nodes: int

    def fmt(self) -> str:
        if math.isnan(self.mean):
            return "-"
        hw = "n/a" if math.isnan(self.halfwidth) else f"{self.halfwidth:.2f}"
        return f"{self.mean:.2f}±{hw}"

    @property
    def low(self):
        return self.mean - self.halfwidth

    @property
    def high(self):
        return self.mean + self.halfwidth


def _ci(values) -> RateCI:
    v = [x for x in values if not math.isnan(x)]
    if not v:
        return RateCI(math.nan, math.nan, 0)
    if len(v) == 1:
        return RateCI(v[0], math.nan, 1)
    return RateCI(*ci95(v), len(v))


def summarize(metrics: list[Metrics]) -> dict[str, tuple[RateCI, RateCI]]:
    """Per class (and merged), CI95 of detection and FP rate across nodes."""
    out = {}
    for cls in CLASS_ORDER:
        det, fp = [], []
        for m in metrics:
            view = m.merged() if cls == ANY else m
            if NORMAL not in m.classes and cls == ANY:
                continue
            if cls not in view.classes:
                continue
            det.append(view.detection_rate(cls))
            fp.append(view.fp_rate(cls))
        if det:
            out[cls] = (_ci(det), _ci(fp))
    return out


@dataclass
class SingleResult:
    set_id: str
    window_size: float
    outcomes: list[NodeOutcome]

    def summary(self):
        return summarize([o.metrics for o in self.outcomes])

    def weights(self) -> dict[str, float]:
        names = feature_names(self.set_id)
        idx = {n: i for i, n in enumerate(names)}
        w = feature_weights([[idx[n] for n in o.selected] for o in self.outcomes], len(names))
        return dict(zip(names, w.tolist()))


def evaluate_single(ds: Dataset, set_id: str, cfg: ExperimentConfig, monitors) -> SingleResult:
    outcomes = []
    names = feature_names(set_id)
    for node in monitors:
        X, y, _ = ds.for_observer(node).matrix(set_id)
        if len(y) == 0:
            log.warning("node %s has no %s samples at window %g", node, set_id, ds.window_size)
            continue
        o = train_node(X, y, names, cfg, node)
        if o is not None:
            outcomes.append(o)
    return SingleResult(set_id, ds.window_size, outcomes)


@dataclass
class CascadeNode:
    node: int
    stage1_features: list
    stage2_features: list
    stage1: Metrics
    stage2: Metrics
    cascade: Metrics
    invocation_rate: float
    invocation_rate_normal: float
    n_samples: int


def evaluate_cascade_node(ds: Dataset, cfg: ExperimentConfig, node, seed=0) -> CascadeNode | None:
    """Both stages selected and cross-validated on the rows where the local
    full vector and the remote composite are both available; the cascade is
    scored in the same folds with the same trained stages."""
    sub = ds.for_observer(node)
    A, B = sub.features("F2"), sub.features("f0")
    common = ~(np.isnan(A).any(axis=1) | np.isnan(B).any(axis=1))
    width = A.shape[1]
    data = _usable(np.hstack([A, B])[common], sub.labels[common].astype(object), node)
    if data is None:
        return None
    XY, y = data
    A, B = XY[:, :width], XY[:, width:]
    est = _inducer(cfg)
    order1, _ = forward_selection(A, y, est, cfg.inner_folds, seed)
    order2, _ = forward_selection(B, y, est, cfg.inner_folds, seed)
    sel1, sel2 = sorted(order1), sorted(order2)
    folds = stratified_kfold(y, cfg.n_folds, seed)
    p1 = np.empty(len(y), dtype=object)
    p2 = np.empty(len(y), dtype=object)
    final = np.empty(len(y), dtype=object)
    flagged = np.zeros(len(y), dtype=bool)
    for train, test in folds:
        s1 = _stage(est, A, sel1, y, train)
        s2 = _stage(est, B, sel2, y, train)
        p1[test] = s1.predict(A[test][:, sel1])
        p2[test] = s2.predict(B[test][:, sel2])
        casc = CascadeClassifier(s1, s2, stage1_columns=sel1,
                                 stage2_columns=[width + j for j in sel2], prefit=True)
        final[test], flagged[test] = casc.decide(XY[test])
    labels = sorted(set(y.tolist()) | set(p1.tolist()) | set(p2.tolist()))
    normal_rows = y == NORMAL
    n1, n2 = feature_names("F2"), feature_names("f0")
    return CascadeNode(node, [n1[j] for j in order1], [n2[j] for j in order2],
                       evaluate(p1, y, labels), evaluate(p2, y, labels), evaluate(final, y, labels),
                       float(flagged.mean()),
                       float(flagged[normal_rows].mean()) if normal_rows.any() else math.nan,
                       len(y))


class _Majority:
    """Stage stand-in when forward selection kept no feature."""

    def __init__(self, label):
        self.label = label

    def predict(self, X):
        return np.full(len(X), self.label, dtype=object)


def _stage(est, X, cols, y, train):
    if not cols:
        counts = Counter(y[train].tolist())
        return _Majority(min(counts, key=lambda c: (-counts[c], c)))
    return clone(est).fit(X[train][:, cols], y[train])


@dataclass
class CascadeResult:
    window_size: float
    nodes: list[CascadeNode]

    def summary(self) -> dict[str, dict]:
        return {name: summarize([getattr(n, name) for n in self.nodes])
                for name in ("stage1", "stage2", "cascade")}

    def invocation(self) -> tuple[RateCI, RateCI]:
        return (_ci([100 * n.invocation_rate for n in self.nodes]),
                _ci([100 * n.invocation_rate_normal for n in self.nodes]))


def evaluate_cascade(ds: Dataset, cfg: ExperimentConfig, monitors) -> CascadeResult:
    nodes = []
    for node in monitors:
        r = evaluate_cascade_node(ds, cfg, node)
        if r is not None:
            nodes.append(r)
    return CascadeResult(ds.window_size, nodes)
