"""Packet-level event trace: the only thing the feature pipeline sees.

Conventions
-----------
* ``src`` is the transmitter of the frame and ``dst_mac`` its MAC-layer
  receiver (-1 for broadcast). An event whose observer equals ``src`` is a
  transmission by the observer; otherwise the observer received it.
* Data frames carry positive packet ids and their connection sequence number.
* Routing frames (rreq/rrep/rerr) carry negative packet ids; ``seq_number``
  holds the hop count advertised in the frame. The connection id ties the
  frame to the originator/destination pair it serves.
* Overheard frames keep the packet id of the transmission they belong to.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

EVENT_KINDS = ("send", "receive", "overhear", "rts", "cts", "ack", "backoff",
               "rreq", "rrep", "rerr", "drop_internal")
KIND = {name: i for i, name in enumerate(EVENT_KINDS)}
SEND, RECEIVE, OVERHEAR, RTS, CTS, ACK, BACKOFF, RREQ, RREP, RERR, DROP = range(len(EVENT_KINDS))

FIELDS = ("timestamp", "observer", "event_kind", "packet_id", "connection_id",
          "src", "dst_mac", "seq_number", "size")
EVENT_DTYPE = np.dtype([
    ("timestamp", "f8"), ("observer", "i4"), ("event_kind", "i1"), ("packet_id", "i8"),
    ("connection_id", "i4"), ("src", "i4"), ("dst_mac", "i4"), ("seq_number", "i8"),
    ("size", "i4"),
])
MAGIC = "# immunids trace v1"


@dataclass(frozen=True)
class ConnectionInfo:
    connection_id: int
    source: int
    destination: int
    start: float
    end: float


@dataclass
class SimulationStats:
    injected: int = 0
    delivered: int = 0
    dropped: int = 0
    pending: int = 0
    skipped_connections: int = 0


@dataclass
class EventTrace:
    events: np.ndarray
    connections: dict[int, ConnectionInfo]
    duration: float
    stats: SimulationStats = field(default_factory=SimulationStats)

    def __len__(self):
        return len(self.events)

    def by_observer(self) -> dict[int, np.ndarray]:
        """Events grouped per observer, each group still in time order."""
        ev = self.events
        order = np.argsort(ev["observer"], kind="stable")
        obs = ev["observer"][order]
        cuts = np.flatnonzero(np.diff(obs)) + 1
        groups = np.split(order, cuts)
        return {int(ev["observer"][g[0]]): ev[g] for g in groups if len(g)}

    def connection_arrays(self):
        """Per-connection (source, destination) lookup arrays indexed by id."""
        size = max(self.connections, default=-1) + 1
        src = np.full(size, -1, dtype=np.int64)
        dst = np.full(size, -1, dtype=np.int64)
        for c in self.connections.values():
            src[c.connection_id] = c.source
            dst[c.connection_id] = c.destination
        return src, dst

    def to_text(self) -> str:
        buf = io.StringIO()
        write_trace(self, buf)
        return buf.getvalue()


def write_trace(trace: EventTrace, fh) -> None:
    fh.write(MAGIC + "\n")
    fh.write(f"# duration\t{trace.duration!r}\n")
    s = trace.stats
    fh.write(f"# stats\t{s.injected}\t{s.delivered}\t{s.dropped}\t{s.pending}\t{s.skipped_connections}\n")
    for c in sorted(trace.connections.values(), key=lambda c: c.connection_id):
        fh.write(f"# connection\t{c.connection_id}\t{c.source}\t{c.destination}\t{c.start!r}\t{c.end!r}\n")
    fh.write("\t".join(FIELDS) + "\n")
    ev = trace.events
    kinds = np.array(EVENT_KINDS)[ev["event_kind"]]
    cols = [np.char.mod("%.6f", ev["timestamp"]), ev["observer"].astype(str), kinds,
            ev["packet_id"].astype(str), ev["connection_id"].astype(str), ev["src"].astype(str),
            ev["dst_mac"].astype(str), ev["seq_number"].astype(str), ev["size"].astype(str)]
    lines = cols[0]
    for c in cols[1:]:
        lines = np.char.add(np.char.add(lines, "\t"), c)
    if len(lines):
        fh.write("\n".join(lines.tolist()))
        fh.write("\n")


class TraceParseError(ValueError):
    pass


def read_trace(fh) -> EventTrace:
    first = fh.readline().rstrip("\n")
    if first != MAGIC:
        raise TraceParseError(f"line 1: not a trace file ({first[:40]!r})")
    duration = None
    stats = SimulationStats()
    connections = {}
    lineno = 1
    header_seen = False
    rows = []
    for line in fh:
        lineno += 1
        line = line.rstrip("\n")
        if not header_seen:
            if line.startswith("# duration"):
                duration = float(line.split("\t")[1])
            elif line.startswith("# stats"):
                stats = SimulationStats(*map(int, line.split("\t")[1:]))
            elif line.startswith("# connection"):
                p = line.split("\t")
                cid = int(p[1])
                connections[cid] = ConnectionInfo(cid, int(p[2]), int(p[3]), float(p[4]), float(p[5]))
            elif line == "\t".join(FIELDS):
                header_seen = True
            else:
                raise TraceParseError(f"line {lineno}: unexpected header line {line[:40]!r}")
            continue
        p = line.split("\t")
        if len(p) != len(FIELDS):
            raise TraceParseError(f"line {lineno}: expected {len(FIELDS)} fields, got {len(p)}")
        try:
            rows.append((float(p[0]), int(p[1]), KIND[p[2]], int(p[3]), int(p[4]),
                         int(p[5]), int(p[6]), int(p[7]), int(p[8])))
        except (KeyError, ValueError) as exc:
            raise TraceParseError(f"line {lineno}: {exc}") from exc
    if duration is None or not header_seen:
        raise TraceParseError("missing duration or column header")
    return EventTrace(np.array(rows, dtype=EVENT_DTYPE), connections, duration, stats)


def save_binary(trace: EventTrace, path) -> None:
    """Compact lossless cache (``.npz``); the text format remains canonical."""
    conns = np.array([(c.connection_id, c.source, c.destination, c.start, c.end)
                      for c in trace.connections.values()], dtype=float).reshape(-1, 5)
    s = trace.stats
    np.savez(path, events=trace.events, connections=conns, duration=trace.duration,
             stats=np.array([s.injected, s.delivered, s.dropped, s.pending, s.skipped_connections]))


def load_binary(path) -> EventTrace:
    with np.load(path) as z:
        conns = {int(r[0]): ConnectionInfo(int(r[0]), int(r[1]), int(r[2]), float(r[3]), float(r[4]))
                 for r in z["connections"]}
        return EventTrace(z["events"], conns, float(z["duration"]),
                          SimulationStats(*(int(x) for x in z["stats"])))
