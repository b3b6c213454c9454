"""AODV-style routing table driven purely by observable trace events.

The simulator and the feature extractor both feed events through
:func:`apply_event`, so a table rebuilt from a node's own trace is identical
to the one the simulator routed with.
"""
from __future__ import annotations

from . import trace as T

ACTIVE_ROUTE_TIMEOUT = 300.0

VALID, EXPIRED, UNREACHABLE = 0, 1, 2


class RoutingTable:
    __slots__ = ("entries", "timeout")

    def __init__(self, timeout: float = ACTIVE_ROUTE_TIMEOUT):
        # dest -> [next_hop, hops, state, expires]
        self.entries: dict[int, list] = {}
        self.timeout = timeout

    def _expire(self, e, now):
        if e[2] == VALID and e[3] <= now:
            e[2] = EXPIRED

    def update(self, dest, next_hop, hops, now):
        e = self.entries.get(dest)
        if e is not None:
            self._expire(e, now)
        if e is None or e[2] != VALID or hops <= e[1]:
            self.entries[dest] = [next_hop, hops, VALID, now + self.timeout]

    def refresh(self, dest, now):
        e = self.entries.get(dest)
        if e is not None:
            self._expire(e, now)
            if e[2] == VALID:
                e[3] = now + self.timeout

    def invalidate(self, dest, now):
        e = self.entries.get(dest)
        if e is not None:
            self._expire(e, now)
            if e[2] == VALID:
                e[2] = UNREACHABLE

    def lookup(self, dest, now):
        e = self.entries.get(dest)
        if e is None:
            return None
        self._expire(e, now)
        return e[0] if e[2] == VALID else None

    def hops(self, dest, now):
        e = self.entries.get(dest)
        if e is None:
            return None
        self._expire(e, now)
        return e[1] if e[2] == VALID else None

    def snapshot(self, now) -> tuple[float, int, int, int, int]:
        """``(mean hops, #unreachable, #invalid, #valid, max hops)`` at ``now``."""
        hops = []
        unreach = invalid = 0
        for e in self.entries.values():
            self._expire(e, now)
            if e[2] == VALID:
                hops.append(e[1])
            else:
                invalid += 1
                unreach += e[2] == UNREACHABLE
        mean = sum(hops) / len(hops) if hops else 0.0
        return mean, unreach, invalid, len(hops), max(hops, default=0)


def apply_event(table: RoutingTable, observer, kind, src, seq, origin, destination, now):
    """Update ``observer``'s table for one of its own trace events."""
    if kind == T.RREQ:
        if src != observer:
            table.update(origin, src, seq + 1, now)
            table.update(src, src, 1, now)
    elif kind == T.RREP:
        if src != observer:
            table.update(destination, src, seq + 1, now)
            table.update(src, src, 1, now)
    elif kind == T.RERR:
        table.invalidate(destination, now)
    elif kind == T.SEND:
        if observer != destination:
            table.refresh(destination, now)
    elif kind == T.RECEIVE:
        table.refresh(origin, now)
        if observer != destination:
            table.refresh(destination, now)
