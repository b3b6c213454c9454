"""Static node placement and unit-disk connectivity."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

MIN_COMPONENT = 8  # nodes needed to host a 7-hop connection


@dataclass(frozen=True)
class Topology:
    positions: np.ndarray  # (n, 2) metres
    radio_radius: float
    area: tuple[float, float] = (math.inf, math.inf)
    neighbors: tuple[tuple[int, ...], ...] = field(default=None, compare=False)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "positions", pos)
        if self.radio_radius <= 0:
            raise ValueError("radio_radius must be positive")
        if self.neighbors is None:
            d = np.hypot(pos[:, None, 0] - pos[None, :, 0], pos[:, None, 1] - pos[None, :, 1])
            adj = (d <= self.radio_radius) & ~np.eye(len(pos), dtype=bool)
            object.__setattr__(self, "neighbors",
                               tuple(tuple(int(j) for j in np.flatnonzero(row)) for row in adj))

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def nodes(self) -> range:
        return range(self.n)

    def adjacent(self, u: int, v: int) -> bool:
        return v in self.neighbors[u]

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u in self.nodes for v in self.neighbors[u] if u < v]

    def degree(self, u: int) -> int:
        return len(self.neighbors[u])

    def mean_degree(self) -> float:
        return float(np.mean([len(nb) for nb in self.neighbors])) if self.n else 0.0

    def hops_from(self, source: int, extra_links=None) -> np.ndarray:
        """BFS hop counts from ``source`` (-1 where unreachable).

        ``extra_links`` maps node -> iterable of additional neighbours, e.g.
        private wormhole links.
        """
        dist = np.full(self.n, -1, dtype=int)
        dist[source] = 0
        queue = deque([source])
        while queue:
            u = queue.popleft()
            nxt = self.neighbors[u]
            if extra_links and u in extra_links:
                nxt = tuple(nxt) + tuple(extra_links[u])
            for v in nxt:
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        return dist

    def hop_matrix(self, extra_links=None) -> np.ndarray:
        return np.vstack([self.hops_from(s, extra_links) for s in self.nodes])

    def components(self) -> list[list[int]]:
        seen = np.zeros(self.n, dtype=bool)
        comps = []
        for s in self.nodes:
            if seen[s]:
                continue
            members = np.flatnonzero(self.hops_from(s) >= 0)
            seen[members] = True
            comps.append(members.tolist())
        return sorted(comps, key=len, reverse=True)


def build_topology(node_count: int, area_w: float, area_h: float, radio_radius: float,
                   seed: int) -> Topology:
    """Uniform random placement; rejects graphs that cannot host a 7-hop path."""
    if node_count < 2:
        raise ValueError("node_count must be >= 2")
    if radio_radius <= 0:
        raise ValueError("radio_radius must be positive")
    rng = np.random.default_rng(seed)
    pos = np.column_stack([rng.uniform(0, area_w, node_count), rng.uniform(0, area_h, node_count)])
    topo = Topology(pos, radio_radius, (area_w, area_h))
    largest = len(topo.components()[0])
    if largest < MIN_COMPONENT:
        raise ValueError(f"largest connected component has {largest} nodes; "
                         f"need >= {MIN_COMPONENT} for a 7-hop connection")
    return topo


def line_topology(n: int, spacing: float = 80.0, radio_radius: float = 100.0) -> Topology:
    """Nodes on a line, each adjacent only to its immediate neighbours."""
    pos = np.column_stack([np.arange(n) * spacing, np.zeros(n)])
    return Topology(pos, radio_radius, (max(spacing * (n - 1), 1.0), 1.0))
