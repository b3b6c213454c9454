"""Detection rate, FP rate and classification error, plus normal-theory CI95."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.metrics import confusion_matrix

NORMAL = "normal"
ANY = "any misbehavior"


@dataclass(frozen=True)
class Metrics:
    """Per-class performance. ``confusion[i, j]`` counts truth ``i`` predicted as ``j``."""

    classes: tuple
    confusion: np.ndarray

    @property
    def n(self) -> np.ndarray:
        return self.confusion.sum(axis=1)

    @property
    def correct(self) -> np.ndarray:
        return np.diag(self.confusion)

    @property
    def false_positives(self) -> np.ndarray:
        return self.confusion.sum(axis=0) - self.correct

    def _index(self, cls) -> int:
        return self.classes.index(cls)

    def detection_rate(self, cls) -> float:
        """Percent of objects of ``cls`` classified as ``cls``; NaN if none exist."""
        i = self._index(cls)
        n = self.n[i]
        return 100.0 * self.correct[i] / n if n else math.nan

    def fp_rate(self, cls) -> float:
        """Percent of ``cls`` predictions that were wrong; NaN if never predicted."""
        i = self._index(cls)
        denom = self.false_positives[i] + self.correct[i]
        return 100.0 * self.false_positives[i] / denom if denom else math.nan

    @property
    def classification_error(self) -> float:
        return 100.0 * self.false_positives.sum() / self.n.sum()

    def merged(self, normal=NORMAL) -> "Metrics":
        """Binary view with every non-normal class folded into one."""
        is_bad = np.array([c != normal for c in self.classes])
        groups = [~is_bad, is_bad]
        m = np.array([[self.confusion[np.ix_(r, c)].sum() for c in groups] for r in groups])
        return Metrics((normal, ANY), m)

    def rates(self) -> dict:
        out = {c: (self.detection_rate(c), self.fp_rate(c)) for c in self.classes}
        if NORMAL in self.classes and ANY not in self.classes:
            m = self.merged()
            out[ANY] = (m.detection_rate(ANY), m.fp_rate(ANY))
        return out


def evaluate(predictions, truth_labels, labels=None) -> Metrics:
    predictions = np.asarray(predictions)
    truth = np.asarray(truth_labels)
    if truth.size == 0:
        raise ValueError("cannot evaluate an empty prediction set")
    if predictions.shape != truth.shape:
        raise ValueError(f"length mismatch: {predictions.shape} vs {truth.shape}")
    if labels is None:
        labels = sorted(set(truth.tolist()) | set(predictions.tolist()))
    cm = confusion_matrix(truth, predictions, labels=list(labels))
    return Metrics(tuple(labels), cm)


def metrics_from_counts(confusion, classes, predicted_rows: bool = False) -> Metrics:
    """Build metrics from published counts; set ``predicted_rows`` if rows are predictions."""
    cm = np.asarray(confusion)
    return Metrics(tuple(classes), cm.T if predicted_rows else cm)


def ci95(values) -> tuple[float, float]:
    """Mean and half-width ``1.96 * s / sqrt(n)`` with the sample standard deviation."""
    v = np.asarray([x for x in values if not math.isnan(x)], dtype=float)
    if v.size < 2:
        raise ValueError("need at least two values for a confidence interval")
    return float(v.mean()), float(1.96 * v.std(ddof=1) / math.sqrt(v.size))
