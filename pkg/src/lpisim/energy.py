"""System power model and energy integration.

Components: nodes (linear in CPU usage between an idle floor and a peak),
switch chassis (constant), and every powered port (by EEE state). Transition
and handshake time is billed at Wake power.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Optional

from .des import S
from .link_power import WAKE, LinkPowerProfile, PowerState


@dataclass(frozen=True)
class PowerParams:
    switch_chassis: float = 250.0
    node_min: float = 800.0
    node_max: float = 1200.0
    port_wake: float = WAKE.power

    def __post_init__(self):
        if min(self.switch_chassis, self.node_min, self.node_max, self.port_wake) < 0:
            raise ValueError("power parameters must be non-negative")
        if self.node_min > self.node_max:
            raise ValueError("node_min must not exceed node_max")


def node_power(usage: float, params: PowerParams = PowerParams()) -> float:
    if not 0.0 <= usage <= 1.0:
        raise ValueError(f"usage {usage} outside [0, 1]")
    return params.node_min + usage * (params.node_max - params.node_min)


@dataclass(frozen=True)
class PowerBreakdown:
    nodes: float
    switches: float
    ports: float

    @property
    def network(self) -> float:
        return self.switches + self.ports

    @property
    def total(self) -> float:
        return self.nodes + self.switches + self.ports

    @property
    def network_share(self) -> float:
        return self.network / self.total

    @property
    def ports_share(self) -> float:
        return self.ports / self.total


def static_power(n_nodes: int, n_switches: int, n_ports: int, port_power: float,
                 usage: float = 0.0, params: PowerParams = PowerParams()) -> PowerBreakdown:
    """Instantaneous power with every node at ``usage`` and every port drawing ``port_power``."""
    return PowerBreakdown(nodes=n_nodes * node_power(usage, params),
                          switches=n_switches * params.switch_chassis,
                          ports=n_ports * port_power)


def system_power_snapshot(network, node_usage: Optional[Iterable[float]] = None,
                          params: PowerParams = PowerParams()) -> PowerBreakdown:
    """Instantaneous power of a live :class:`~lpisim.fabric.Network`."""
    topo = network.topo
    usages = list(node_usage) if node_usage is not None else [0.0] * topo.n_nodes
    nodes = sum(node_power(u, params) for u in usages)
    ports = sum(network.state_power(p) for p in network.ports)
    return PowerBreakdown(nodes, topo.n_switches * params.switch_chassis, ports)


@dataclass
class EnergyReport:
    duration_ps: int
    nodes_j: float
    switches_j: float
    ports_j: float
    delivered_bits: int
    port_state_ps: dict = field(default_factory=dict)

    @property
    def network_j(self) -> float:
        return self.switches_j + self.ports_j

    @property
    def total_j(self) -> float:
        return self.nodes_j + self.switches_j + self.ports_j

    @property
    def j_per_bit(self) -> Optional[float]:
        return self.total_j / self.delivered_bits if self.delivered_bits else None

    @property
    def network_j_per_bit(self) -> Optional[float]:
        return self.network_j / self.delivered_bits if self.delivered_bits else None

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(total_j=self.total_j, network_j=self.network_j, j_per_bit=self.j_per_bit,
                 network_j_per_bit=self.network_j_per_bit)
        return d


def port_energy(time_in: Mapping[PowerState, int], sleep_power: float, wake_power: float) -> float:
    """Joules for one port from its per-state time (ps)."""
    asleep = time_in.get(PowerState.SLEEP, 0)
    awake = sum(t for s, t in time_in.items() if s is not PowerState.SLEEP)
    return (asleep * sleep_power + awake * wake_power) / S


def energy_report(duration: int, port_times: Iterable[Mapping[PowerState, int]],
                  node_busy: Iterable[float], n_switches: int, profile: LinkPowerProfile,
                  delivered_bits: int, params: PowerParams = PowerParams()) -> EnergyReport:
    """Integrate energy over ``duration`` ps.

    ``node_busy`` holds, per node, the integral of usage over time in ps.
    """
    totals = {s.value: 0 for s in PowerState}
    ports_j = 0.0
    for t in port_times:
        ports_j += port_energy(t, profile.power, params.port_wake)
        for s, v in t.items():
            totals[s.value] += v
    busy = list(node_busy)
    span = params.node_max - params.node_min
    nodes_j = (len(busy) * params.node_min * duration + span * sum(busy)) / S
    switches_j = n_switches * params.switch_chassis * duration / S
    return EnergyReport(duration, nodes_j, switches_j, ports_j, delivered_bits, totals)


def savings(policy: EnergyReport, baseline: EnergyReport) -> dict:
    """Fractional savings (positive = less energy than baseline)."""
    def frac(a, b):
        return 0.0 if a == b else (1.0 - a / b if b else 0.0)
    return {
        "total": frac(policy.total_j, baseline.total_j),
        "network": frac(policy.network_j, baseline.network_j),
        "ports": frac(policy.ports_j, baseline.ports_j),
    }
