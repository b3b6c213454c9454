"""Scenario description: traffic, misbehavior plans and the declarative config file."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, fields

import numpy as np
import yaml

from .topology import Topology, build_topology

log = logging.getLogger(__name__)

NONE, DROPPING, DELAYING, WORMHOLE = "none", "dropping", "delaying", "wormhole"
MISBEHAVIOR_KINDS = (NONE, DROPPING, DELAYING, WORMHOLE)


def connection_duration(delta: float, lam: float, r_u: float) -> float:
    """Connection lifetime ``delta + r_u * lam``."""
    if delta < 0 or lam < 0:
        raise ValueError("delta and lambda must be non-negative")
    if not 0.0 <= r_u <= 1.0:
        raise ValueError(f"r_u must lie in [0, 1], got {r_u}")
    return delta + r_u * lam


@dataclass(frozen=True)
class Connection:
    connection_id: int
    source: int
    destination: int
    start_time: float
    duration: float
    injection_interval: float = 2.0
    packet_size: int = 68
    path: tuple[int, ...] = ()

    @property
    def end_time(self) -> float:
        return self.start_time + self.duration


@dataclass(frozen=True)
class MisbehaviorPlan:
    kind: str = NONE
    affected_nodes: frozenset = frozenset()
    drop_or_delay_prob: float = 0.30
    delay_amount: float = 0.1
    wormholes: tuple[tuple[int, int, int], ...] = ()  # (entry, exit, min_hop_separation)

    def __post_init__(self):
        if self.kind not in MISBEHAVIOR_KINDS:
            raise ValueError(f"unknown misbehavior kind {self.kind!r}")
        if not 0.0 <= self.drop_or_delay_prob <= 1.0:
            raise ValueError("drop_or_delay_prob must lie in [0, 1]")
        object.__setattr__(self, "affected_nodes", frozenset(self.affected_nodes))

    def wormhole_links(self) -> dict[int, tuple[int, ...]]:
        links: dict[int, list[int]] = {}
        for a, b, _ in self.wormholes:
            links.setdefault(a, []).append(b)
            links.setdefault(b, []).append(a)
        return {k: tuple(v) for k, v in links.items()}

    def wormhole_endpoints(self) -> frozenset:
        return frozenset(n for a, b, _ in self.wormholes for n in (a, b))

    def misbehaving(self, node: int) -> bool:
        if self.kind in (DROPPING, DELAYING):
            return node in self.affected_nodes
        if self.kind == WORMHOLE:
            return node in self.wormhole_endpoints()
        return False


class InfeasiblePlan(ValueError):
    pass


def plan_misbehavior(topology: Topology, kind: str, count: int = 0, seed: int = 0,
                     min_hop_separation: int = 15, prob: float = 0.30,
                     delay_amount: float = 0.1) -> MisbehaviorPlan:
    """Draw misbehaving nodes (dropping/delaying) or wormhole endpoint pairs.

    Wormhole pairs are disjoint and at least ``min_hop_separation`` hops
    apart in the misbehavior-free topology.
    """
    if kind == NONE:
        return MisbehaviorPlan()
    rng = np.random.default_rng(seed)
    if kind in (DROPPING, DELAYING):
        if count > topology.n:
            raise InfeasiblePlan(f"cannot pick {count} of {topology.n} nodes")
        chosen = rng.choice(topology.n, size=count, replace=False)
        return MisbehaviorPlan(kind, frozenset(int(x) for x in chosen), prob, delay_amount)
    if kind != WORMHOLE:
        raise ValueError(f"unknown misbehavior kind {kind!r}")
    hops = topology.hop_matrix()
    far = np.argwhere(np.triu(hops >= min_hop_separation))
    if len(far) == 0:
        raise InfeasiblePlan(f"no node pair is {min_hop_separation} hops apart; "
                             f"maximum achievable separation is {int(hops.max())}")
    used: set[int] = set()
    pairs = []
    for i in rng.permutation(len(far)):
        a, b = (int(x) for x in far[i])
        if a in used or b in used:
            continue
        pairs.append((a, b, min_hop_separation))
        used.update((a, b))
        if len(pairs) == count:
            break
    if len(pairs) < count:
        raise InfeasiblePlan(f"only {len(pairs)} disjoint pairs at >= {min_hop_separation} hops "
                             f"(maximum achievable separation {int(hops.max())})")
    return MisbehaviorPlan(WORMHOLE, frozenset(), prob, delay_amount, tuple(pairs))


@dataclass
class ConnectionsSpec:
    """How connections are drawn and replaced during a run."""

    concurrent: int = 10
    hops: int = 7
    injection_interval: float = 2.0
    packet_size: int = 68
    delta: float = 900.0
    lam: float = 300.0
    wormhole_attract_fraction: float = 0.5
    start_spread: float = 10.0


def generate_connections(topology: Topology, spec: ConnectionsSpec, plan: MisbehaviorPlan,
                         sim_duration: float, seed: int) -> list[Connection]:
    """Keep ``spec.concurrent`` connection slots busy for the whole run.

    Each slot draws a source not used before and a destination exactly
    ``spec.hops`` hops away in the effective topology (wormholes included).
    When the plan has wormholes, a fraction of draws is restricted to pairs
    whose shortest path crosses one, modelling the attacker attracting traffic.
    """
    rng = np.random.default_rng(seed)
    links = plan.wormhole_links() or None
    hops = topology.hop_matrix(links)
    pairs_ok = hops == spec.hops
    via = np.zeros_like(pairs_ok)
    if links:
        plain = topology.hop_matrix()
        via = pairs_ok & ((plain < 0) | (plain > spec.hops))
    used_sources: set[int] = set()
    out: list[Connection] = []
    for slot in range(spec.concurrent):
        t = float(rng.uniform(0.0, spec.start_spread))
        while t < sim_duration:
            pool = via if (via.any() and rng.random() < spec.wormhole_attract_fraction) else pairs_ok
            sources = [s for s in np.flatnonzero(pool.any(axis=1)) if s not in used_sources]
            if not sources:
                used_sources.clear()
                sources = list(np.flatnonzero(pool.any(axis=1)))
                if not sources:
                    log.warning("no %d-hop node pairs available", spec.hops)
                    return out
            s = int(sources[rng.integers(len(sources))])
            dests = np.flatnonzero(pool[s])
            d = int(dests[rng.integers(len(dests))])
            used_sources.add(s)
            dur = connection_duration(spec.delta, spec.lam, float(rng.uniform()))
            out.append(Connection(len(out), s, d, t, dur, spec.injection_interval, spec.packet_size))
            t += dur
    return out


@dataclass
class ScenarioConfig:
    """Everything needed to reproduce a run family; loaded from YAML or JSON."""

    node_count: int = 200
    area: tuple[float, float] = (1000.0, 1000.0)
    radio_radius: float = 100.0
    connections: int = 10
    connection_hops: int = 7
    injection_interval: float = 2.0
    packet_size: int = 68
    delta: float = 900.0
    lam: float = 300.0
    sim_duration: float = 3600.0
    seed: int = 1
    misbehaving_nodes: int = 50
    drop_or_delay_prob: float = 0.30
    delay_amount: float = 0.1
    wormholes: int = 3
    wormhole_separation: int = 10
    wormhole_attract_fraction: float = 0.5
    positions: list | None = None

    KEYS = None  # filled below

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        data = dict(data)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        unknown = set(data) - set(cls.KEYS)
        if unknown:
            raise ConfigError(f"unknown scenario key(s): {', '.join(sorted(unknown))}")
        try:
            cfg = cls(**data)
            cfg.area = tuple(float(x) for x in cfg.area)
            cfg.validate()
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc
        return cfg

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ConfigError("scenario file must contain a mapping")
        return cls.from_dict(data)

    def validate(self):
        checks = {
            "node_count": self.node_count >= 2,
            "radio_radius": self.radio_radius > 0,
            "sim_duration": self.sim_duration > 0,
            "injection_interval": self.injection_interval > 0,
            "connections": self.connections >= 1,
            "connection_hops": self.connection_hops >= 1,
            "drop_or_delay_prob": 0.0 <= self.drop_or_delay_prob <= 1.0,
            "misbehaving_nodes": 0 <= self.misbehaving_nodes <= self.node_count,
            "delta": self.delta >= 0,
            "lam": self.lam >= 0,
        }
        for key, ok in checks.items():
            if not ok:
                raise ConfigError(f"invalid value for {key!r}: {getattr(self, key)!r}")
        if self.positions is not None and len(self.positions) != self.node_count:
            raise ConfigError("'positions' must list node_count coordinates")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["area"] = list(self.area)
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.as_dict(), sort_keys=True).encode()).hexdigest()[:12]

    def topology(self) -> Topology:
        if self.positions is not None:
            return Topology(np.asarray(self.positions, dtype=float), self.radio_radius, self.area)
        return build_topology(self.node_count, self.area[0], self.area[1], self.radio_radius, self.seed)

    def connections_spec(self) -> ConnectionsSpec:
        return ConnectionsSpec(self.connections, self.connection_hops, self.injection_interval,
                               self.packet_size, self.delta, self.lam, self.wormhole_attract_fraction)

    def plan(self, topology: Topology, kind: str, seed: int) -> MisbehaviorPlan:
        if kind in (DROPPING, DELAYING):
            return plan_misbehavior(topology, kind, self.misbehaving_nodes, seed,
                                    prob=self.drop_or_delay_prob, delay_amount=self.delay_amount)
        if kind == WORMHOLE:
            return plan_misbehavior(topology, kind, self.wormholes, seed, self.wormhole_separation)
        return plan_misbehavior(topology, kind)


ScenarioConfig.KEYS = tuple(f.name for f in fields(ScenarioConfig))


class ConfigError(ValueError):
    pass
