"""Two-stage co-stimulation cascade: a cheap remote-feature classifier gates a
watchdog classifier over the full local feature set.

The first stage sees the composite vector built from the observer's and the
two-hop-downstream node's restricted features. Only if it reports any
misbehavior does the observer switch on promiscuous monitoring and ask the
second stage, whose answer is final.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, clone
from sklearn.utils.validation import check_is_fitted

from .learn import NORMAL, Metrics, evaluate
from .learn.tree import DecisionTree

CLEAR = "clear"
CONFIRMED = "confirmed"
DISMISSED = "dismissed"
INCONCLUSIVE = "inconclusive"
AWAITING = "awaiting"


@dataclass(frozen=True)
class CascadeDecision:
    suspicious: bool
    confirmed_label: object
    stage2_invoked: bool
    status: str

    def __post_init__(self):
        if self.status == CONFIRMED and not (self.suspicious and self.stage2_invoked):
            raise AssertionError("confirmation requires both stages to flag")


class CascadeClassifier(ClassifierMixin, BaseEstimator):
    """Stage 1 on ``stage1_columns`` of ``X``; stage 2 on ``stage2_columns``.

    ``fit`` trains both stages on the same rows. Pre-fitted stages (or any
    object with ``predict``) can be passed with ``prefit=True``.
    """

    def __init__(self, stage1=None, stage2=None, stage1_columns=None, stage2_columns=None,
                 normal_label=NORMAL, negative_costim_timeout: int = 2, prefit: bool = False):
        self.stage1 = stage1
        self.stage2 = stage2
        self.stage1_columns = stage1_columns
        self.stage2_columns = stage2_columns
        self.normal_label = normal_label
        self.negative_costim_timeout = negative_costim_timeout
        self.prefit = prefit

    def _cols(self, X, cols):
        return X if cols is None else X[:, cols]

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        if self.prefit:
            self.stage1_, self.stage2_ = self.stage1, self.stage2
        else:
            s1 = DecisionTree() if self.stage1 is None else clone(self.stage1)
            s2 = DecisionTree() if self.stage2 is None else clone(self.stage2)
            self.stage1_ = s1.fit(self._cols(X, self.stage1_columns), y)
            self.stage2_ = s2.fit(self._cols(X, self.stage2_columns), y)
        self.classes_ = np.unique(y)
        return self

    def decide(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Final labels and the mask of rows routed to stage 2."""
        if not self.prefit:
            check_is_fitted(self, "stage1_")
        s1 = getattr(self, "stage1_", self.stage1)
        s2 = getattr(self, "stage2_", self.stage2)
        X = np.asarray(X, dtype=float)
        first = np.asarray(s1.predict(self._cols(X, self.stage1_columns)))
        flagged = first != self.normal_label
        final = np.full(len(X), self.normal_label, dtype=object)
        if flagged.any():
            final[flagged] = s2.predict(self._cols(X[flagged], self.stage2_columns))
        return final, flagged

    def predict(self, X):
        return self.decide(X)[0]


def cascade_classify(cascade: CascadeClassifier, F2_vector, f0_provider,
                     missing_windows: int = 0) -> CascadeDecision:
    """Decide one window at one observer.

    ``F2_vector`` is None when the downstream report did not arrive; after
    ``negative_costim_timeout`` such windows the absence itself is treated as
    an alarm and the watchdog stage runs. ``f0_provider`` is called lazily and
    may raise; a failure after an alarm is reported as inconclusive.
    """
    s1 = getattr(cascade, "stage1_", cascade.stage1)
    s2 = getattr(cascade, "stage2_", cascade.stage2)
    normal = cascade.normal_label
    if F2_vector is None:
        if missing_windows < cascade.negative_costim_timeout:
            return CascadeDecision(False, None, False, AWAITING)
    else:
        first = s1.predict(np.asarray(F2_vector, dtype=float).reshape(1, -1))[0]
        if first == normal:
            return CascadeDecision(False, normal, False, CLEAR)
    try:
        f0 = f0_provider()
    except Exception:
        return CascadeDecision(True, None, True, INCONCLUSIVE)
    if f0 is None:
        return CascadeDecision(True, None, True, INCONCLUSIVE)
    second = s2.predict(np.asarray(f0, dtype=float).reshape(1, -1))[0]
    if second == normal:
        return CascadeDecision(True, normal, True, DISMISSED)
    return CascadeDecision(True, second, True, CONFIRMED)


@dataclass(frozen=True)
class CascadeReport:
    cascade: Metrics
    stage1: Metrics
    stage2: Metrics
    stage2_on_flagged: Metrics | None
    stage2_invocation_rate: float


def cascade_evaluate(cascade: CascadeClassifier, F2_samples, f0_samples, labels) -> CascadeReport:
    """Score the cascade, each stage alone, and stage 2 restricted to flagged rows.

    Rows of ``F2_samples`` and ``f0_samples`` must describe the same
    (observer, window) pairs in the same order.
    """
    F2 = np.asarray(F2_samples, dtype=float)
    f0 = np.asarray(f0_samples, dtype=float)
    y = np.asarray(labels)
    if not (len(F2) == len(f0) == len(y)):
        raise ValueError(f"unpaired samples: {len(F2)} F2, {len(f0)} f0, {len(y)} labels")
    if len(y) == 0:
        raise ValueError("no samples to evaluate")
    s1 = getattr(cascade, "stage1_", cascade.stage1)
    s2 = getattr(cascade, "stage2_", cascade.stage2)
    normal = cascade.normal_label
    first = np.asarray(s1.predict(F2))
    second = np.asarray(s2.predict(f0))
    flagged = first != normal
    final = np.where(flagged, second, normal)
    labels_ = sorted(set(y.tolist()) | set(first.tolist()) | set(second.tolist()))
    on_flagged = evaluate(second[flagged], y[flagged], labels_) if flagged.any() else None
    return CascadeReport(
        cascade=evaluate(final, y, labels_),
        stage1=evaluate(first, y, labels_),
        stage2=evaluate(second, y, labels_),
        stage2_on_flagged=on_flagged,
        stage2_invocation_rate=float(flagged.mean()),
    )
