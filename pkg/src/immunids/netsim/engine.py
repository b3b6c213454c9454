"""Single-threaded discrete-event simulation of a static ad hoc network.

Protocol abstractions: RTS/CTS/DATA/ACK handshakes with neighbourhood carrier
sensing and exponential back-off, on-demand route discovery (RREQ flood, the
destination answers the first copy, RREP along the reverse path, RERR back to
the originator on route loss), unreliable datagrams with per-connection
sequence numbers, and unit-disk propagation.
"""
from __future__ import annotations

import heapq
import logging
import random
from collections import deque

import numpy as np

from . import trace as T
from .routing import RoutingTable, apply_event
from .scenario import DELAYING, DROPPING, Connection, MisbehaviorPlan
from .topology import Topology

log = logging.getLogger(__name__)

BANDWIDTH = 2e6  # bit/s
RTS_CTS_TIME = 0.0002
ACK_TIME = 0.0002
DIFS = 50e-6
SLOT = 20e-6
CW_MIN, CW_MAX = 31, 1023
RTS_RETRY_LIMIT = 7
LINK_FAILURE_LIMIT = 3  # consecutive handshake failures before RERR
PROC_DELAY = (0.0005, 0.0015)
RREQ_JITTER = (0.001, 0.010)
TUNNEL_LATENCY = 0.0001
CONTROL_SIZE = 24
QUEUE_LIMIT = 64
BUFFER_LIMIT = 64
DISCOVERY_TIMEOUT = 1.0
DISCOVERY_RETRIES = 3

# heap actions
_INJECT, _MAC, _RX, _FLOOD, _FLOOD_RX, _FORWARD, _DISCOVERY_TIMEOUT = range(7)
_DATA, _CTRL = 0, 1


class _Frame:
    __slots__ = ("kind", "ctrl_kind", "pkt", "next_hop", "rts", "bo", "stage")

    def __init__(self, kind, ctrl_kind, pkt, next_hop):
        self.kind = kind
        self.ctrl_kind = ctrl_kind
        self.pkt = pkt
        self.next_hop = next_hop
        self.rts = 0
        self.bo = 0
        self.stage = 0


def run_simulation(topology: Topology, connections: list[Connection], plan: MisbehaviorPlan,
                   sim_duration: float, seed: int, link_failures=None) -> T.EventTrace:
    """Simulate ``connections`` over ``topology`` and return the full event trace.

    ``link_failures`` optionally maps a directed link ``(u, v)`` to the time
    from which every handshake over it fails.
    """
    if sim_duration <= 0:
        raise ValueError("sim_duration must be positive")
    for c in connections:
        for node in (c.source, c.destination):
            if not 0 <= node < topology.n:
                raise ValueError(f"connection {c.connection_id} references unknown node {node}")
    return _Simulator(topology, connections, plan, sim_duration, seed, link_failures or {}).run()


class _Simulator:
    def __init__(self, topo, connections, plan, duration, seed, link_failures):
        self.topo = topo
        self.nb = topo.neighbors
        self.cover = tuple((u,) + topo.neighbors[u] for u in topo.nodes)
        self.conns = {c.connection_id: c for c in connections}
        self.plan = plan
        self.duration = duration
        self.rng = random.Random(seed)
        self.link_failures = link_failures
        self.tunnel = {}
        if plan.kind == "wormhole":
            for a, b, _ in plan.wormholes:
                self.tunnel.setdefault(a, set()).add(b)
                self.tunnel.setdefault(b, set()).add(a)
        self.droppers = plan.affected_nodes if plan.kind == DROPPING else frozenset()
        self.delayers = plan.affected_nodes if plan.kind == DELAYING else frozenset()

        n = topo.n
        self.tables = [RoutingTable() for _ in range(n)]
        self.busy_until = [0.0] * n
        self.queues = [deque() for _ in range(n)]
        self.mac_active = [False] * n
        self.seen_rreq = [set() for _ in range(n)]
        self.fail_count = {}
        self.events = []
        self.heap = []
        self.counter = 0
        self.next_pid = 1
        self.next_ctrl_pid = -1
        self.stats = T.SimulationStats()
        # per connection: next seq, buffer, discovery state
        self.seq = {c: 0 for c in self.conns}
        self.buffer = {c: deque() for c in self.conns}
        self.discovering = {c: 0 for c in self.conns}
        self.skipped = set()

    # -- plumbing -----------------------------------------------------------
    def push(self, t, action, *args):
        self.counter += 1
        heapq.heappush(self.heap, (t, self.counter, action, args))

    def record(self, t, observer, kind, pid, cid, src, dst, seq, size):
        self.events.append((t, observer, kind, pid, cid, src, dst, seq, size))
        if kind in (T.RREQ, T.RREP, T.RERR, T.SEND, T.RECEIVE):
            c = self.conns[cid]
            apply_event(self.tables[observer], observer, kind, src, seq, c.source, c.destination, t)

    def run(self) -> T.EventTrace:
        for c in self.conns.values():
            if c.start_time < self.duration:
                self.push(c.start_time, _INJECT, c.connection_id)
        handlers = {
            _INJECT: self.on_inject, _MAC: self.on_mac, _RX: self.on_rx,
            _FLOOD: self.on_flood, _FLOOD_RX: self.on_flood_rx,
            _FORWARD: self.on_forward, _DISCOVERY_TIMEOUT: self.on_discovery_timeout,
        }
        heap = self.heap
        while heap:
            t, _, action, args = heapq.heappop(heap)
            if t > self.duration:
                break
            handlers[action](t, *args)
        self.stats.pending = self.stats.injected - self.stats.delivered - self.stats.dropped
        ev = np.array(self.events, dtype=T.EVENT_DTYPE) if self.events else np.zeros(0, T.EVENT_DTYPE)
        ev["timestamp"] = np.round(ev["timestamp"], 6)
        ev = ev[np.argsort(ev["timestamp"], kind="stable")]
        infos = {c.connection_id: T.ConnectionInfo(c.connection_id, c.source, c.destination,
                                                    c.start_time, min(c.end_time, self.duration))
                 for c in self.conns.values()}
        return T.EventTrace(ev, infos, self.duration, self.stats)

    # -- traffic --------------------------------------------------------------
    def on_inject(self, t, cid):
        c = self.conns[cid]
        if cid in self.skipped or t >= c.end_time:
            return
        nxt = t + c.injection_interval
        if nxt < c.end_time:
            self.push(nxt, _INJECT, cid)
        pkt = (self.next_pid, cid, c.source, c.destination, self.seq[cid], c.packet_size)
        self.next_pid += 1
        self.seq[cid] += 1
        self.stats.injected += 1
        hop = self.tables[c.source].lookup(c.destination, t)
        if hop is not None:
            self.send_data(t, c.source, pkt, hop)
            return
        buf = self.buffer[cid]
        if len(buf) >= BUFFER_LIMIT:
            self.drop(t, c.source, pkt)
        else:
            buf.append(pkt)
        if not self.discovering[cid]:
            self.start_discovery(t, cid)

    def drop(self, t, node, pkt):
        pid, cid, origin, dest, seq, size = pkt
        self.record(t, node, T.DROP, pid, cid, node, -1, seq, size)
        self.stats.dropped += 1

    def send_data(self, t, node, pkt, hop):
        if hop in self.tunnel.get(node, ()):
            self.tunnel_transfer(t, node, hop, T.SEND, pkt)
        else:
            self.enqueue(t, node, _Frame(_DATA, T.SEND, pkt, hop))

    def deliver_data(self, t, node, pkt, sender):
        pid, cid, origin, dest, seq, size = pkt
        self.record(t, node, T.RECEIVE, pid, cid, sender, node, seq, size)
        if node == dest:
            self.stats.delivered += 1
            return
        delay = self.rng.uniform(*PROC_DELAY)
        if node in self.droppers and self.rng.random() < self.plan.drop_or_delay_prob:
            self.drop(t, node, pkt)
            return
        if node in self.delayers and self.rng.random() < self.plan.drop_or_delay_prob:
            delay += self.plan.delay_amount
        self.push(t + delay, _FORWARD, node, T.SEND, pkt)

    def on_forward(self, t, node, kind, pkt):
        if kind != T.SEND:
            self.send_ctrl(t, node, kind, pkt, pkt[2])
            return
        hop = self.tables[node].lookup(pkt[3], t)
        if hop is None:
            self.drop(t, node, pkt)
            self.send_rerr(t, node, pkt[1])
            return
        self.send_data(t, node, pkt, hop)

    def tunnel_transfer(self, t, node, hop, kind, pkt):
        """Private-link hop: no handshake, no overhearing."""
        pid, cid, _, _, seq, size = pkt
        self.record(t, node, kind, pid, cid, node, hop, seq, size)
        self.push(t + TUNNEL_LATENCY, _RX, hop, kind, pkt, node)

    # -- MAC ------------------------------------------------------------------
    def enqueue(self, t, node, frame):
        q = self.queues[node]
        if len(q) >= QUEUE_LIMIT:
            if frame.kind == _DATA:
                self.drop(t, node, frame.pkt)
            return
        q.append(frame)
        if not self.mac_active[node]:
            self.mac_active[node] = True
            self.push(t, _MAC, node)

    def backoff(self, t, node, frame, until):
        frame.stage += 1
        frame.bo += 1
        pid, cid, _, _, seq, size = frame.pkt
        self.record(t, node, T.BACKOFF, pid, cid, node, frame.next_hop, seq, size)
        cw = min((CW_MIN + 1) * (1 << frame.stage) - 1, CW_MAX)
        self.push(max(until, t) + DIFS + SLOT * self.rng.randint(0, cw), _MAC, node)

    def on_mac(self, t, u):
        q = self.queues[u]
        if not q:
            self.mac_active[u] = False
            return
        frame = q[0]
        busy = self.busy_until
        if busy[u] > t:
            self.backoff(t, u, frame, busy[u])
            return
        v = frame.next_hop
        pid, cid, origin, dest, seq, size = frame.pkt
        failed_from = self.link_failures.get((u, v))
        link_down = failed_from is not None and t >= failed_from
        if frame.kind == _DATA:
            frame.rts += 1
            self.record(t, u, T.RTS, pid, cid, u, v, seq, size)
            if busy[v] > t or link_down:
                if frame.rts >= RTS_RETRY_LIMIT:
                    q.popleft()
                    self.handshake_failed(t, u, v, frame)
                    self.push(t + DIFS, _MAC, u)
                else:
                    self.backoff(t, u, frame, busy[v])
                return
            t_tx = t + RTS_CTS_TIME
            self.record(t_tx, u, T.CTS, pid, cid, v, u, seq, size)
            kind = T.SEND
        else:
            if link_down:
                q.popleft()
                self.push(t + DIFS, _MAC, u)
                return
            t_tx = t
            kind = frame.ctrl_kind
        t_end = t_tx + size * 8.0 / BANDWIDTH + (ACK_TIME if frame.kind == _DATA else 0.0)
        for w in self.cover[u]:
            if busy[w] < t_end:
                busy[w] = t_end
        for w in self.cover[v]:
            if busy[w] < t_end:
                busy[w] = t_end
        self.record(t_tx, u, kind, pid, cid, u, v, seq, size)
        for w in self.nb[u]:
            if w != v:
                self.events.append((t_tx, w, T.OVERHEAR, pid, cid, u, v, seq, size))
        if frame.kind == _DATA:
            self.record(t_end, u, T.ACK, pid, cid, v, u, seq, size)
            self.fail_count[(u, v)] = 0
        q.popleft()
        self.push(t_end, _RX, v, kind, frame.pkt, u)
        self.push(t_end + DIFS, _MAC, u)

    def handshake_failed(self, t, u, v, frame):
        if frame.kind == _DATA:
            self.drop(t, u, frame.pkt)
        key = (u, v)
        self.fail_count[key] = self.fail_count.get(key, 0) + 1
        if self.fail_count[key] >= LINK_FAILURE_LIMIT:
            self.fail_count[key] = 0
            self.send_rerr(t, u, frame.pkt[1])

    def on_rx(self, t, v, kind, pkt, sender):
        if kind == T.SEND:
            self.deliver_data(t, v, pkt, sender)
        elif kind == T.RREP:
            self.on_rrep(t, v, pkt, sender)
        elif kind == T.RERR:
            self.on_rerr(t, v, pkt, sender)

    # -- routing --------------------------------------------------------------
    def start_discovery(self, t, cid):
        c = self.conns[cid]
        self.discovering[cid] += 1
        pid = self.next_ctrl_pid
        self.next_ctrl_pid -= 1
        self.seen_rreq[c.source].add(pid)
        self.on_flood(t, c.source, (pid, cid, c.source, c.destination, 0, CONTROL_SIZE))
        self.push(t + DISCOVERY_TIMEOUT, _DISCOVERY_TIMEOUT, cid, self.discovering[cid])

    def on_discovery_timeout(self, t, cid, attempt):
        if self.discovering[cid] != attempt:
            return
        c = self.conns[cid]
        if self.tables[c.source].lookup(c.destination, t) is not None:
            return
        if attempt >= DISCOVERY_RETRIES:
            log.warning("connection %d (%d -> %d) unroutable; skipped", cid, c.source, c.destination)
            self.skipped.add(cid)
            self.stats.skipped_connections += 1
            buf = self.buffer[cid]
            while buf:
                self.drop(t, c.source, buf.popleft())
            self.discovering[cid] = 0
            return
        self.start_discovery(t, cid)

    def on_flood(self, t, x, rreq):
        pid, cid, origin, dest, hops, size = rreq
        self.record(t, x, T.RREQ, pid, cid, x, -1, hops, size)
        self.push(t + size * 8.0 / BANDWIDTH, _FLOOD_RX, x, rreq)

    def on_flood_rx(self, t, x, rreq):
        receivers = self.nb[x]
        partners = self.tunnel.get(x)
        if partners:
            receivers = receivers + tuple(sorted(partners))
        pid, cid, origin, dest, hops, size = rreq
        for w in receivers:
            self.record(t, w, T.RREQ, pid, cid, x, -1, hops, size)
            seen = self.seen_rreq[w]
            if pid in seen:
                continue
            seen.add(pid)
            if w == dest:
                rep_pid = self.next_ctrl_pid
                self.next_ctrl_pid -= 1
                self.send_ctrl(t, w, T.RREP, (rep_pid, cid, origin, dest, 0, CONTROL_SIZE), origin)
            else:
                self.push(t + self.rng.uniform(*RREQ_JITTER), _FLOOD, w,
                          (pid, cid, origin, dest, hops + 1, size))

    def send_ctrl(self, t, node, kind, pkt, toward):
        hop = self.tables[node].lookup(toward, t)
        if hop is None:
            return
        if hop in self.tunnel.get(node, ()):
            self.tunnel_transfer(t, node, hop, kind, pkt)
        else:
            self.enqueue(t, node, _Frame(_CTRL, kind, pkt, hop))

    def on_rrep(self, t, v, pkt, sender):
        pid, cid, origin, dest, hops, size = pkt
        self.record(t, v, T.RREP, pid, cid, sender, v, hops, size)
        if v == origin:
            if self.discovering[cid]:
                self.discovering[cid] = 0
            hop = self.tables[v].lookup(dest, t)
            buf = self.buffer[cid]
            while buf and hop is not None:
                self.send_data(t, v, buf.popleft(), hop)
            return
        self.push(t + self.rng.uniform(*PROC_DELAY), _FORWARD, v, T.RREP,
                  (pid, cid, origin, dest, hops + 1, size))

    def send_rerr(self, t, node, cid):
        c = self.conns[cid]
        pid = self.next_ctrl_pid
        self.next_ctrl_pid -= 1
        self.record(t, node, T.RERR, pid, cid, node, -1, 0, CONTROL_SIZE)
        if node != c.source:
            self.send_ctrl(t, node, T.RERR, (pid, cid, c.source, c.destination, 0, CONTROL_SIZE), c.source)

    def on_rerr(self, t, v, pkt, sender):
        pid, cid, origin, dest, hops, size = pkt
        self.record(t, v, T.RERR, pid, cid, sender, v, hops, size)
        if v != origin:
            self.push(t + self.rng.uniform(*PROC_DELAY), _FORWARD, v, T.RERR, pkt)
