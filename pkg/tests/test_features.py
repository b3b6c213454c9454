import math
from collections import Counter

import numpy as np
import pytest

from immunids.features import (COMPOSITE, FEATURE_SETS, FEATURES, PROMISCUOUS, LocalFeatureSample,
                               NegativeCostimulation, WindowSpec, compose, extract_features,
                               feature_names, label_dataset, label_for, project, rank_monitors,
                               select_monitor_nodes)
from immunids.netsim import DROPPING, WORMHOLE, Connection, MisbehaviorPlan, line_topology, run_simulation
from immunids.netsim import trace as T


def make_trace(rows, duration=20.0):
    """Build a trace from (t, observer, kind, pid, cid, src, dst_mac, seq) tuples."""
    ev = np.zeros(len(rows), dtype=T.EVENT_DTYPE)
    for i, (t, obs, kind, pid, cid, src, dst, seq) in enumerate(sorted(rows)):
        ev[i] = (t, obs, kind, pid, cid, src, dst, seq, 68)
    conns = {0: T.ConnectionInfo(0, 0, 2, 0.0, duration), 1: T.ConnectionInfo(1, 5, 2, 0.0, duration)}
    return T.EventTrace(ev, conns, duration)


# observer 0 originates connection 0 and forwards connection 1 (5 -> 2) via neighbour 1
HAND = make_trace([
    (1.0, 0, T.RTS, 1, 0, 0, 1, 0), (1.0, 0, T.SEND, 1, 0, 0, 1, 0), (1.1, 0, T.ACK, 1, 0, 1, 0, 0),
    (1.2, 0, T.OVERHEAR, 1, 0, 1, 2, 0),
    (2.0, 0, T.RTS, 2, 0, 0, 1, 1), (2.2, 0, T.BACKOFF, 2, 0, 0, 1, 1), (2.5, 0, T.RTS, 2, 0, 0, 1, 1),
    (2.5, 0, T.SEND, 2, 0, 0, 1, 1), (2.6, 0, T.ACK, 2, 0, 1, 0, 1), (2.9, 0, T.OVERHEAR, 2, 0, 1, 2, 1),
    (3.0, 0, T.RTS, 3, 0, 0, 1, 2), (3.0, 0, T.SEND, 3, 0, 0, 1, 2),
    (4.0, 0, T.RECEIVE, 10, 1, 5, 0, 0), (4.1, 0, T.SEND, 10, 1, 0, 1, 0),
    (6.0, 0, T.RECEIVE, 12, 1, 5, 0, 2), (7.0, 0, T.RECEIVE, 13, 1, 5, 0, 3),
    (12.0, 0, T.RERR, -5, 1, 0, -1, 0), (13.0, 0, T.RREQ, -7, 1, 5, -1, 2),
    (15.0, 0, T.RREP, -9, 1, 0, 1, 1), (15.5, 0, T.OVERHEAR, -9, 1, 1, 5, 2),
])


@pytest.fixture(scope="module")
def hand_samples():
    return extract_features(HAND, 0, 1, WindowSpec(10.0))


class TestWindowSpec:
    def test_complete_windows_only(self):
        assert WindowSpec(10.0).count(20.0) == 2
        assert WindowSpec(10.0).count(19.99) == 1
        assert WindowSpec(50.0).count(3600.0) == 72
        assert WindowSpec(10.0, origin=5.0).count(20.0) == 1

    def test_index(self):
        assert WindowSpec(10.0).index([0.0, 9.999, 10.0, 25.0]).tolist() == [0, 0, 1, 2]

    def test_rejects_non_positive(self):
        with pytest.raises(ValueError):
            WindowSpec(0.0)


class TestHandBuiltTrace:
    def test_window_count_and_traffic(self, hand_samples):
        assert [s.window_index for s in hand_samples] == [0, 1]
        assert [s.traffic_present for s in hand_samples] == [True, False]
        assert hand_samples[0].pcts_tx == 4 and hand_samples[0].pcts_rx == 3

    def test_mac_features(self, hand_samples):
        s = hand_samples[0]
        assert s["M1"] == pytest.approx((1 / 1 + 1 / 2 + 0 / 1) / 3)
        assert s["M2"] == pytest.approx(1 / 3)
        assert math.isnan(hand_samples[1]["M1"])

    def test_watchdog_features(self, hand_samples):
        s = hand_samples[0]
        assert s["M3"] == pytest.approx(2 / 4)
        assert s["M4"] == pytest.approx((0.2 + 0.4) / 2)
        assert math.isnan(hand_samples[1]["M3"])

    def test_forwarded_bits_and_partners(self, hand_samples):
        s = hand_samples[0]
        assert s["M5"] == pytest.approx(68 * 8 / 10)
        assert s["M6"] == 2
        assert s["M7"] == 1
        assert s["R10"] == 1
        assert hand_samples[1]["M5"] == 0

    def test_route_control_features(self, hand_samples):
        w0, w1 = hand_samples
        assert w0["R2"] == 0 and w1["R2"] == pytest.approx(0.1)
        assert w1["R6"] == pytest.approx(0.1)
        assert w0["R3"] == 1.0 and w0["R4"] == 0.0
        assert w1["R3"] == 1.0 and w1["R4"] == pytest.approx(0.5)

    def test_timing_features(self, hand_samples):
        s = hand_samples[0]
        assert s["T1"] == pytest.approx(0.1)
        assert s["T2"] == pytest.approx(1.5) and s["T3"] == pytest.approx(0.5)
        assert s["T4"] == pytest.approx(1.5) and s["T5"] == pytest.approx(0.5)
        assert math.isnan(hand_samples[1]["T2"])

    def test_without_neighbour_link_features_absent(self):
        s = extract_features(HAND, 0, None, WindowSpec(10.0))[0]
        assert all(math.isnan(s[f]) for f in ("M1", "M2", "M3", "M4"))
        assert s["M5"] == pytest.approx(54.4) and not s.traffic_present

    def test_as_dict_order(self, hand_samples):
        assert list(hand_samples[0].as_dict()) == list(FEATURES)


@pytest.fixture(scope="module")
def dropping():
    plan = MisbehaviorPlan(DROPPING, frozenset({1}), 0.3)
    tr = run_simulation(line_topology(3), [Connection(0, 0, 2, 0.0, 200.0)], plan, 200.0, 1)
    return extract_features(tr, 0, 1, WindowSpec(50.0))


class TestOnSimulatedLine:
    def test_watchdog_sees_drop_ratio(self, dropping):
        m3 = np.mean([s["M3"] for s in dropping])
        assert 0.6 <= m3 <= 0.8

    def test_send_to_destination_excluded_from_watchdog(self):
        topo = line_topology(2)
        tr = run_simulation(topo, [Connection(0, 0, 1, 0.0, 100.0)], MisbehaviorPlan(), 100.0, 0)
        s = extract_features(tr, 0, 1, WindowSpec(50.0))
        assert all(x.traffic_present and math.isnan(x["M3"]) for x in s)
        assert all(x["M1"] == 1.0 for x in s)


class TestFeatureSets:
    def test_sizes_and_nesting(self):
        assert len(FEATURES) == 24
        assert len(FEATURE_SETS["f0"]) == 24
        assert len(FEATURE_SETS["f1"]) == 17 and len(FEATURE_SETS["f2"]) == 16
        assert set(FEATURE_SETS["f1"]) == set(FEATURES) - set(PROMISCUOUS)
        assert set(FEATURE_SETS["f2"]) == set(FEATURE_SETS["f1"]) - {"M1"}

    def test_composite_names(self):
        names = feature_names("F2")
        assert len(names) == 32
        assert names[0] == "M2_L" and names[16] == "M2_R"
        assert set(COMPOSITE) == {"F0", "F1", "F2"}

    def test_project_from_each_representation(self):
        vals = np.arange(24.0)
        sample = LocalFeatureSample(0, 1, 0, vals, True)
        f2 = project(sample, "f2")
        assert project(sample.as_dict(), "f2").tolist() == f2.tolist()
        assert project(vals, "f2").tolist() == f2.tolist()
        assert project(project(vals, "f1"), "f2").tolist() == f2.tolist()
        with pytest.raises(ValueError):
            project(f2, "f1")

    def test_compose_concatenates_local_then_remote(self):
        a = LocalFeatureSample(0, 1, 3, np.arange(24.0), True)
        b = LocalFeatureSample(1, 2, 3, np.arange(24.0) + 100, True)
        v = compose(a, b, "F1")
        assert len(v) == 34 and v.window_index == 3
        assert v.values[:17].tolist() == project(a, "f1").tolist()
        assert v.values[17:].tolist() == project(b, "f1").tolist()

    def test_missing_remote_is_negative_costimulation(self):
        a = LocalFeatureSample(0, 1, 0, np.zeros(24), True)
        with pytest.raises(NegativeCostimulation):
            compose(a, None, "F2")

    def test_window_mismatch_rejected(self):
        a = LocalFeatureSample(0, 1, 0, np.zeros(24), True)
        b = LocalFeatureSample(1, 2, 1, np.zeros(24), True)
        with pytest.raises(ValueError):
            compose(a, b, "F0")


class TestLabels:
    def test_label_follows_next_hop(self):
        plan = MisbehaviorPlan(DROPPING, frozenset({4}), 0.3)
        assert label_for(plan, 4) == "dropping"
        assert label_for(plan, 5) == "normal"
        assert label_for(plan, None) == "normal"
        assert label_for(MisbehaviorPlan(), 4) == "normal"

    def test_wormhole_endpoints(self):
        plan = MisbehaviorPlan(WORMHOLE, wormholes=((2, 9, 7),))
        assert label_for(plan, 2) == label_for(plan, 9) == "wormhole"

    def test_dataset_restricted_to_windows(self):
        plan = MisbehaviorPlan(DROPPING, frozenset({1}), 0.3)
        samples = [LocalFeatureSample(0, 1, w, np.zeros(24), True) for w in range(4)]
        out = label_dataset(samples, plan, windows=[1, 3])
        assert [s.window_index for s in out] == [1, 3]
        assert {s.label for s in out} == {"dropping"}


class TestMonitors:
    def test_top_forwarders(self):
        counts = Counter({1: 50, 2: 30, 3: 80, 4: 0})
        assert rank_monitors(counts, {}, 2) == [3, 1]

    def test_ties_spread_over_degrees(self):
        counts = Counter({1: 10, 2: 10, 3: 10})
        degrees = {1: 4, 2: 5, 3: 9}
        assert rank_monitors(counts, degrees, 2) == [1, 3]

    def test_fewer_forwarders_than_requested(self, caplog):
        assert rank_monitors(Counter({7: 3}), {}, 5) == [7]
        assert "only 1" in caplog.text

    def test_line_middle_node_is_the_forwarder(self):
        tr = run_simulation(line_topology(3), [Connection(0, 0, 2, 0.0, 50.0)], MisbehaviorPlan(), 50.0, 0)
        assert select_monitor_nodes(tr, 1) == [1]
