import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from immunids.learn import ANY, ci95, evaluate, metrics_from_counts

# Published confusion matrix for the F0 classifier; rows are predictions,
# columns the actual class (1 normal, 2 dropping, 3 delaying, 4 wormhole).
PUBLISHED = [[51629, 66, 104, 433],
             [47, 10927, 6, 1],
             [88, 5, 15847, 9],
             [120, 2, 2, 2990]]
CLASSES = ("normal", "dropping", "delaying", "wormhole")


def test_perfect_predictions():
    m = evaluate(["a", "b", "b"], ["a", "b", "b"])
    assert m.detection_rate("a") == 100.0 and m.detection_rate("b") == 100.0
    assert m.fp_rate("a") == 0.0 and m.classification_error == 0.0


def test_everything_predicted_as_one_class():
    truth = ["a"] * 5 + ["b"] * 5
    m = evaluate(["a"] * 10, truth)
    assert m.detection_rate("a") == 100.0
    assert m.fp_rate("a") == 50.0
    assert m.classification_error == 50.0
    assert m.detection_rate("b") == 0.0
    assert math.isnan(m.fp_rate("b"))


def test_published_dropping_counts():
    m = metrics_from_counts(PUBLISHED, CLASSES, predicted_rows=True)
    assert m.n[1] == 11000
    assert m.false_positives[1] == 54
    assert m.detection_rate("dropping") == pytest.approx(99.34, abs=0.01)
    assert m.fp_rate("dropping") == pytest.approx(0.49, abs=0.01)
    assert m.detection_rate("dropping") == pytest.approx(100 * 10927 / 11000)
    assert m.fp_rate("dropping") == pytest.approx(100 * 54 / (54 + 10927))


def test_confusion_sums_match_sample_counts():
    m = metrics_from_counts(PUBLISHED, CLASSES, predicted_rows=True)
    assert m.n.sum() == np.sum(PUBLISHED)
    assert m.false_positives.sum() == m.n.sum() - m.correct.sum()


def test_merged_view():
    truth = ["normal", "dropping", "delaying", "normal", "wormhole"]
    pred = ["normal", "delaying", "normal", "dropping", "wormhole"]
    m = evaluate(pred, truth).merged()
    assert m.classes == ("normal", ANY)
    # misbehavior confused among kinds still counts as detected in the merged view
    assert m.confusion.tolist() == [[1, 1], [1, 2]]
    assert m.detection_rate(ANY) == pytest.approx(200 / 3)
    assert m.fp_rate(ANY) == pytest.approx(100 / 3)


def test_rates_include_merged():
    r = evaluate(["normal", "dropping"], ["normal", "dropping"]).rates()
    assert r[ANY] == (100.0, 0.0)


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        evaluate([], [])
    with pytest.raises(ValueError):
        evaluate(["a"], ["a", "b"])


@given(st.lists(st.tuples(st.sampled_from("xyz"), st.sampled_from("xyz")), min_size=1, max_size=60),
       st.randoms())
def test_permutation_invariance(pairs, rnd):
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    a = evaluate([p for p, _ in pairs], [t for _, t in pairs], list("xyz"))
    b = evaluate([p for p, _ in shuffled], [t for _, t in shuffled], list("xyz"))
    assert np.array_equal(a.confusion, b.confusion)


@given(st.lists(st.tuples(st.sampled_from(["normal", "d", "w"]), st.sampled_from(["normal", "d", "w"])),
                min_size=1, max_size=60))
def test_merged_binary_identities(pairs):
    m = evaluate([p for p, _ in pairs], [t for _, t in pairs], ["normal", "d", "w"])
    b = m.merged()
    assert b.confusion.sum() == len(pairs)
    # the normal class's false positives are exactly the missed misbehavior
    assert b.false_positives[0] == b.n[1] - b.correct[1]
    assert b.false_positives[1] == b.n[0] - b.correct[0]
    for cls in b.classes:
        d = b.detection_rate(cls)
        assert math.isnan(d) or 0.0 <= d <= 100.0


class TestCI95:
    def test_constant_values(self):
        assert ci95([3.0, 3.0, 3.0]) == (3.0, 0.0)

    def test_two_extremes(self):
        mean, hw = ci95([0.0, 100.0])
        assert mean == 50.0
        assert hw == pytest.approx(1.96 * 70.7107 / math.sqrt(2), abs=1e-3)
        assert hw == pytest.approx(98.0, abs=0.01)

    def test_needs_two_values(self):
        with pytest.raises(ValueError):
            ci95([1.0])

    def test_nan_entries_ignored(self):
        assert ci95([1.0, float("nan"), 1.0]) == (1.0, 0.0)

    def test_width_shrinks_with_root_n(self):
        rng = np.random.default_rng(0)
        widths = []
        for n in (400, 1600):
            widths.append(np.mean([ci95(rng.normal(size=n))[1] for _ in range(50)]))
        assert widths[1] / widths[0] == pytest.approx(0.5, rel=0.1)
