"""Megafly (Dragonfly+) topology construction and deterministic minimal routing.

Each group is a complete bipartite graph of ``a`` leaf and ``a`` spine
switches. Leaves host the nodes, spines own the global links, and every pair
of groups is joined by exactly one global link.

Port numbering: switch ports come first in switch order (``switch_id * radix
+ local_port``), followed by one NIC port per node. On a leaf, local ports
``0..k-1`` face nodes and ``k..2k-1`` face spines, with ``k = radix // 2``. On
a spine, ``0..k-1`` face leaves and ``k..2k-1`` are global ports. Global port
``j`` of group ``g`` leads to group ``j`` if ``j < g`` and to ``j + 1`` otherwise.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class TopologyConfig:
    groups: int = 65
    nodes_per_group: int = 64
    switches_per_group: int = 16
    radix: int = 16
    kind: str = "megafly"  # "megafly" | "single_switch"

    def validate(self) -> None:
        if self.kind == "single_switch":
            if self.nodes_per_group < 1:
                raise ConfigurationError("single_switch needs nodes_per_group >= 1")
            return
        if self.kind != "megafly":
            raise ConfigurationError(f"unknown topology kind {self.kind!r}")
        if min(self.groups, self.nodes_per_group, self.switches_per_group, self.radix) < 1:
            raise ConfigurationError("all topology counts must be positive")
        if self.switches_per_group % 2:
            raise ConfigurationError(
                "a = switches_per_group / 2 must be integral "
                f"(switches_per_group={self.switches_per_group})")
        if self.radix % 2:
            raise ConfigurationError(f"radix / 2 must be integral (radix={self.radix})")
        a, k = self.switches_per_group // 2, self.radix // 2
        if a != k:
            raise ConfigurationError(
                f"leaf spine ports radix/2={k} must equal spines per group a={a}")
        if self.nodes_per_group != a * k:
            raise ConfigurationError(
                f"nodes_per_group = a*(radix/2) violated: {self.nodes_per_group} != {a}*{k}")
        if self.groups - 1 != a * k:
            raise ConfigurationError(
                f"groups-1 = a*(radix/2) violated: {self.groups}-1 != {a}*{k}")


@dataclass(frozen=True)
class Switch:
    id: int
    role: str  # "leaf" | "spine" | "single"
    group: int
    index: int  # position within its group and role


@dataclass(frozen=True)
class Node:
    id: int
    group: int
    leaf: int  # switch id
    leaf_port: int  # local port index on that leaf


@dataclass(frozen=True)
class PortInfo:
    id: int
    device: str  # "switch" | "nic"
    device_id: int
    local: int
    peer: int = -1
    is_global: bool = False


@dataclass
class HopDistanceTable:
    """Per-port count of transmitted packets by route length."""

    diameter: int
    counts: dict[int, int] = field(default_factory=dict)
    total: int = 0

    def record(self, hops: int) -> None:
        if not 1 <= hops <= self.diameter:
            raise ValueError(f"hop count {hops} outside [1, {self.diameter}]")
        self.counts[hops] = self.counts.get(hops, 0) + 1
        self.total += 1

    def proportions(self) -> dict[int, float]:
        if not self.total:
            return {}
        return {h: c / self.total for h, c in sorted(self.counts.items())}


def record_distance(table: HopDistanceTable, hops: int) -> HopDistanceTable:
    table.record(hops)
    return table


class TopologyGraph:
    def __init__(self, config: TopologyConfig):
        config.validate()
        self.config = config
        self.switches: list[Switch] = []
        self.nodes: list[Node] = []
        self.ports: list[PortInfo] = []
        self.links: list[tuple[int, int]] = []
        if config.kind == "single_switch":
            self._build_single()
        else:
            self._build_megafly()
        self.nic_port = [self.port_id_nic(n.id) for n in self.nodes]

    # -- construction -----------------------------------------------------
    def _alloc_ports(self, radix: int) -> None:
        peers = {}
        for a, b in self.links:
            peers[a] = b
            peers[b] = a
        self.ports = []
        for sw in self.switches:
            for p in range(radix):
                pid = sw.id * radix + p
                self.ports.append(PortInfo(pid, "switch", sw.id, p, peers.get(pid, -1),
                                           self._global_flags.get(pid, False)))
        for node in self.nodes:
            pid = self.port_id_nic(node.id)
            self.ports.append(PortInfo(pid, "nic", node.id, 0, peers[pid]))

    def _build_single(self) -> None:
        n = self.config.nodes_per_group
        self.radix = n
        self.a = 1
        self.k = n
        self.switches = [Switch(0, "single", 0, 0)]
        self.nodes = [Node(i, 0, 0, i) for i in range(n)]
        self._nic_base = n
        self._global_flags = {}
        self.links = [(i, self._nic_base + i) for i in range(n)]
        self._alloc_ports(n)
        self.diameter = 2

    def _build_megafly(self) -> None:
        c = self.config
        a = c.switches_per_group // 2
        k = c.radix // 2
        self.radix, self.a, self.k = c.radix, a, k
        S = c.switches_per_group
        for g in range(c.groups):
            for i in range(a):
                self.switches.append(Switch(g * S + i, "leaf", g, i))
            for i in range(a):
                self.switches.append(Switch(g * S + a + i, "spine", g, i))
        self._nic_base = len(self.switches) * c.radix
        for g in range(c.groups):
            for l in range(a):
                for p in range(k):
                    nid = g * c.nodes_per_group + l * k + p
                    self.nodes.append(Node(nid, g, g * S + l, p))
        self._global_flags = {}
        links = []
        for node in self.nodes:
            links.append((self.port_id_nic(node.id), node.leaf * self.radix + node.leaf_port))
        for g in range(c.groups):
            for l in range(a):
                for s in range(a):
                    leaf_port = self.leaf_sw(g, l) * self.radix + k + s
                    spine_port = self.spine_sw(g, s) * self.radix + l
                    links.append((leaf_port, spine_port))
        for g in range(c.groups):
            for h in range(g + 1, c.groups):
                pg = self.global_port(g, h)
                ph = self.global_port(h, g)
                self._global_flags[pg] = self._global_flags[ph] = True
                links.append((pg, ph))
        self.links = links
        self._alloc_ports(c.radix)
        self.diameter = 5

    # -- id helpers ---------------------------------------------------------
    def port_id_nic(self, node_id: int) -> int:
        return self._nic_base + node_id

    def leaf_sw(self, group: int, index: int) -> int:
        return group * self.config.switches_per_group + index

    def spine_sw(self, group: int, index: int) -> int:
        return group * self.config.switches_per_group + self.a + index

    def global_port(self, group: int, other: int) -> int:
        j = other if other < group else other - 1
        s, p = divmod(j, self.k)
        return self.spine_sw(group, s) * self.radix + self.k + p

    @property
    def n_switches(self) -> int:
        return len(self.switches)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_ports(self) -> int:
        return len(self.ports)

    @property
    def n_switch_ports(self) -> int:
        return self._nic_base

    # -- routing ------------------------------------------------------------
    def route(self, src: int, dst: int) -> list[int]:
        """Ordered list of transmitting (output) ports from the source NIC to the
        last switch port before the destination NIC. Its length is the hop count."""
        if src == dst:
            raise ValueError("self-messages are delivered locally and never routed")
        if not (0 <= src < self.n_nodes and 0 <= dst < self.n_nodes):
            raise ValueError(f"node id out of range: {src} -> {dst}")
        s, d = self.nodes[src], self.nodes[dst]
        R = self.radix
        path = [self.port_id_nic(src)]
        if self.config.kind == "single_switch":
            path.append(d.leaf_port)
            return path
        if s.leaf == d.leaf:
            path.append(d.leaf * R + d.leaf_port)
            return path
        leaf_idx_s = s.leaf - self.leaf_sw(s.group, 0)
        leaf_idx_d = d.leaf - self.leaf_sw(d.group, 0)
        if s.group == d.group:
            up = dst % self.a
            path.append(s.leaf * R + self.k + up)
            path.append(self.spine_sw(s.group, up) * R + leaf_idx_d)
            path.append(d.leaf * R + d.leaf_port)
            return path
        gp = self.global_port(s.group, d.group)
        spine_s = gp // R - self.spine_sw(s.group, 0)
        path.append(s.leaf * R + self.k + spine_s)
        path.append(gp)
        far = self.ports[gp].peer
        path.append((far // R) * R + leaf_idx_d)
        path.append(d.leaf * R + d.leaf_port)
        return path

    def hops(self, src: int, dst: int) -> int:
        return len(self.route(src, dst))

    def device_of_port(self, pid: int) -> tuple[str, int]:
        p = self.ports[pid]
        return p.device, p.device_id

    # -- oracle & export ----------------------------------------------------
    def adjacency(self) -> dict[tuple[str, int], list[tuple[str, int]]]:
        adj: dict[tuple[str, int], list[tuple[str, int]]] = {}
        for a, b in self.links:
            da = self.device_of_port(a)
            db = self.device_of_port(b)
            adj.setdefault(da, []).append(db)
            adj.setdefault(db, []).append(da)
        return adj

    def bfs_hops(self, src: int, targets: Optional[Iterable[int]] = None) -> dict[int, int]:
        """Shortest link count from node ``src`` to every node (plain BFS)."""
        adj = self.adjacency()
        start = ("nic", src)
        dist = {start: 0}
        q = deque([start])
        while q:
            u = q.popleft()
            for v in adj.get(u, ()):
                if v not in dist:
                    dist[v] = dist[u] + 1
                    q.append(v)
        want = range(self.n_nodes) if targets is None else targets
        return {n: dist[("nic", n)] for n in want}

    def to_dict(self) -> dict:
        return {
            "schema": "lpisim-topology/1",
            "config": {
                "kind": self.config.kind,
                "groups": self.config.groups,
                "nodes_per_group": self.config.nodes_per_group,
                "switches_per_group": self.config.switches_per_group,
                "radix": self.config.radix,
            },
            "switches": [{"id": s.id, "role": s.role, "group": s.group} for s in self.switches],
            "nodes": [{"id": n.id, "group": n.group, "leaf": n.leaf, "port": n.leaf_port}
                      for n in self.nodes],
            "ports": [{"id": p.id, "device": p.device, "device_id": p.device_id,
                       "local": p.local, "peer": p.peer, "global": p.is_global}
                      for p in self.ports],
            "links": [list(l) for l in self.links],
        }

    def dump_json(self, fh) -> None:
        json.dump(self.to_dict(), fh, separators=(",", ":"))


def build(config: Optional[TopologyConfig] = None) -> TopologyGraph:
    return TopologyGraph(config or TopologyConfig())


def micro(n_nodes: int = 2) -> TopologyGraph:
    """Single switch with ``n_nodes`` attached NICs (test and oracle scenarios)."""
    return TopologyGraph(TopologyConfig(groups=1, nodes_per_group=n_nodes,
                                        switches_per_group=1, radix=n_nodes,
                                        kind="single_switch"))
