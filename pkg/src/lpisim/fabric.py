"""CIOQ switch and NIC model with credit-based lossless links.

Packets move by virtual cut-through: the head reaches the next port one wire
delay after transmission starts and becomes eligible for switch arbitration
one traversal delay later. Output queues accept packets regardless of the
port's power state, so a grant to a sleeping port is what wakes it.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .des import NS, S, SimEvent, SimulationError, Simulator
from .link_power import DEEP_SLEEP, WAKE, LinkPowerMixin, LinkPowerProfile, PowerState
from .topology import HopDistanceTable, TopologyGraph

MIN_FRAME_BYTES = 64


@dataclass(frozen=True)
class FabricParams:
    bandwidth_bps: int = 400_000_000_000
    buffer_bytes: int = 64 * 1024
    injection_bytes: int = 64 * 1024
    traversal_delay: int = 100 * NS
    wire_local: int = 10 * NS
    wire_global: int = 50 * NS
    mtu: int = 4096


@dataclass
class Packet:
    id: int
    src: int
    dst: int
    size: int  # payload bytes
    created_at: int
    path: list[int]
    message_id: int = -1
    delivered_at: Optional[int] = None
    hop_index: int = 0
    wire_bytes: int = 0

    @property
    def hops(self) -> int:
        return len(self.path)

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError(f"packet {self.id}: size must be positive, got {self.size}")
        self.wire_bytes = max(self.size, MIN_FRAME_BYTES)


class Port:
    __slots__ = (
        "id", "is_nic", "device_id", "is_global", "peer", "out_q", "out_bytes", "out_cap",
        "in_q", "in_bytes", "in_cap", "credits", "transmitting", "ctrl_busy_until",
        "retry_ev", "state", "state_entered_at", "time_in", "hs", "timer", "armed_tpdt",
        "wake_after_down", "idle_since", "policy", "transitions", "sync_log_last",
        "tx_packets", "tx_bytes", "wire_delay",
    )

    def __init__(self, pid: int, is_nic: bool, device_id: int, is_global: bool):
        self.id = pid
        self.is_nic = is_nic
        self.device_id = device_id
        self.is_global = is_global
        self.peer: Optional[Port] = None
        self.out_q: deque[Packet] = deque()
        self.out_bytes = 0
        self.out_cap = 0
        self.in_q: deque[Packet] = deque()
        self.in_bytes = 0
        self.in_cap = 0
        self.credits = 0
        self.transmitting = False
        self.ctrl_busy_until = 0
        self.retry_ev: Optional[SimEvent] = None
        self.state = PowerState.WAKE
        self.state_entered_at = 0
        self.time_in = {s: 0 for s in PowerState}
        self.hs = None
        self.timer: Optional[SimEvent] = None
        self.armed_tpdt: Optional[int] = None
        self.wake_after_down = False
        self.idle_since: Optional[int] = 0
        self.policy = None
        self.transitions = 0
        self.sync_log_last: Optional[int] = None
        self.tx_packets = 0
        self.tx_bytes = 0
        self.wire_delay = 0

    def __repr__(self):
        return f"Port({self.id}, {self.state.value})"


class SwitchState:
    __slots__ = ("id", "ports", "rr", "arb_pending")

    def __init__(self, sid: int, ports: list[Port]):
        self.id = sid
        self.ports = ports
        self.rr = {p.id: 0 for p in ports}  # per output: next input index to favour
        self.arb_pending = False


class Network(LinkPowerMixin):
    def __init__(self, sim: Simulator, topo: TopologyGraph, params: FabricParams = FabricParams(),
                 profile: LinkPowerProfile = DEEP_SLEEP, wake_power: float = WAKE.power,
                 policy_factory: Optional[Callable[[Port], object]] = None,
                 reject_retry: str = "rearm", log_states: bool = False):
        self.sim = sim
        self.topo = topo
        self.params = params
        self.profile = profile
        self.wake_power = wake_power
        self.reject_retry = reject_retry
        self.state_log: Optional[list] = [] if log_states else None
        self.ports: list[Port] = []
        for info in topo.ports:
            p = Port(info.id, info.device == "nic", info.device_id, info.is_global)
            self.ports.append(p)
        for info, p in zip(topo.ports, self.ports):
            if info.peer < 0:
                raise SimulationError(f"port {info.id} is unconnected")
            p.peer = self.ports[info.peer]
            p.wire_delay = params.wire_global if info.is_global else params.wire_local
            p.out_cap = params.injection_bytes if p.is_nic else params.buffer_bytes
            p.in_cap = params.buffer_bytes
        for p in self.ports:
            p.credits = p.peer.in_cap
        self.switches: list[SwitchState] = []
        R = topo.radix
        for sw in topo.switches:
            self.switches.append(SwitchState(sw.id, self.ports[sw.id * R:(sw.id + 1) * R]))
        self.radix = R
        self.nic_ports = [self.ports[pid] for pid in topo.nic_port]
        self.diameter = topo.diameter
        if policy_factory is not None:
            for p in self.ports:
                p.policy = policy_factory(p)
        # hooks set by the simulation driver
        self.on_deliver: Optional[Callable[[Packet], None]] = None
        self.on_injection_space: Optional[Callable[[int], None]] = None
        self.on_activity: Optional[Callable[[Port], None]] = None
        self.on_idle_end: Optional[Callable[[Port, int, bool], None]] = None
        # counters
        self.injected = 0
        self.delivered = 0
        self.ctrl_frames = 0
        self.handshakes = 0
        self.rejections = 0
        self.sleeps = 0
        self._next_pkt = 0

    # -- timing ---------------------------------------------------------------
    def ser_time(self, nbytes: int) -> int:
        # ceil(nbytes * 8 bits / bw) in ps
        return -(-nbytes * 8 * S // self.params.bandwidth_bps)

    def wire_delay(self, port: Port) -> int:
        return port.wire_delay

    # -- start-up -------------------------------------------------------------
    def start(self) -> None:
        """All ports begin idle in Wake; arm their PDT timers."""
        for p in self.ports:
            p.idle_since = 0
            if p.policy is not None:
                self.arm_pdt(p)

    # -- injection ------------------------------------------------------------
    def new_packet(self, src: int, dst: int, size: int, message_id: int = -1) -> Packet:
        pkt = Packet(self._next_pkt, src, dst, size, self.sim.now,
                     self.topo.route(src, dst), message_id)
        self._next_pkt += 1
        return pkt

    def injection_room(self, node: int) -> int:
        p = self.nic_ports[node]
        return p.out_cap - p.out_bytes

    def inject(self, pkt: Packet) -> None:
        port = self.nic_ports[pkt.src]
        if port.out_bytes + pkt.wire_bytes > port.out_cap:
            raise SimulationError(f"injection queue overflow at node {pkt.src}")
        self.injected += 1
        self.enqueue_output(port, pkt)

    # -- output side ----------------------------------------------------------
    def enqueue_output(self, port: Port, pkt: Packet) -> None:
        port.out_q.append(pkt)
        port.out_bytes += pkt.wire_bytes
        if port.out_bytes > port.out_cap:
            raise SimulationError(f"output buffer overflow at port {port.id}")
        now = self.sim.now
        if port.idle_since is not None:
            idle = now - port.idle_since
            port.idle_since = None
            miss = port.state is not PowerState.WAKE
            if self.on_idle_end is not None:
                self.on_idle_end(port, idle, miss)
        if self.on_activity is not None:
            self.on_activity(port)
        self.on_output_enqueue_power(port)
        if port.state is PowerState.WAKE:
            self.try_transmit(port)

    def try_transmit(self, port: Port) -> None:
        if port.transmitting or not port.out_q or port.state is not PowerState.WAKE:
            return
        now = self.sim.now
        if port.ctrl_busy_until > now:
            if port.retry_ev is None or port.retry_ev.fired or port.retry_ev.cancelled:
                port.retry_ev = self.sim.schedule(port.ctrl_busy_until, "tx-retry",
                                                  self.try_transmit, port, entity=port.id)
            return
        pkt = port.out_q[0]
        if port.credits < pkt.wire_bytes:
            return
        port.credits -= pkt.wire_bytes
        port.transmitting = True
        port.tx_packets += 1
        port.tx_bytes += pkt.wire_bytes
        if port.policy is not None:
            port.policy.observe_hops(pkt.hops)
        ser = self.ser_time(pkt.wire_bytes)
        sim = self.sim
        sim.schedule(now + ser, "transmission-complete", self._tx_done, port, entity=port.id)
        peer = port.peer
        if peer.is_nic:
            sim.schedule(now + port.wire_delay, "head-arrival", self._head_at_nic, peer,
                         entity=peer.id)
            sim.schedule(now + port.wire_delay + ser, "packet-arrival", self._deliver, peer, pkt,
                         entity=peer.id)
        else:
            sim.schedule(now + port.wire_delay, "packet-arrival", self._head_at_switch, peer, pkt,
                         entity=peer.id)

    def _tx_done(self, port: Port) -> None:
        pkt = port.out_q.popleft()
        port.out_bytes -= pkt.wire_bytes
        port.transmitting = False
        if port.is_nic:
            if self.on_injection_space is not None:
                self.on_injection_space(port.device_id)
        else:
            self._request_arbitration(self.switches[port.device_id])
        if port.out_q:
            self.try_transmit(port)
        else:
            port.idle_since = self.sim.now
            if port.policy is not None:
                self.on_transmission_complete_power(port)

    # -- input side -----------------------------------------------------------
    def _head_at_nic(self, port: Port) -> None:
        self.on_reception_power(port)

    def _head_at_switch(self, port: Port, pkt: Packet) -> None:
        self.on_reception_power(port)
        port.in_bytes += pkt.wire_bytes
        if port.in_bytes > port.in_cap:
            raise SimulationError(f"input buffer overflow at port {port.id}")
        self.sim.schedule_in(self.params.traversal_delay, "switch-traversal", self._eligible,
                             port, pkt, entity=port.id)

    def _eligible(self, port: Port, pkt: Packet) -> None:
        pkt.hop_index += 1
        port.in_q.append(pkt)
        self._request_arbitration(self.switches[port.device_id])

    def _deliver(self, port: Port, pkt: Packet) -> None:
        if pkt.dst != port.device_id:
            raise SimulationError(f"packet {pkt.id} for node {pkt.dst} reached node {port.device_id}")
        pkt.delivered_at = self.sim.now
        up = port.peer
        up.credits += pkt.wire_bytes
        self.delivered += 1
        self.try_transmit(up)
        if self.on_deliver is not None:
            self.on_deliver(pkt)

    # -- arbitration ----------------------------------------------------------
    def _request_arbitration(self, sw: SwitchState) -> None:
        if not sw.arb_pending:
            sw.arb_pending = True
            self.sim.schedule(self.sim.now, "arbitration", self._arbitrate_all, sw, entity=sw.id)

    def _arbitrate_all(self, sw: SwitchState) -> None:
        sw.arb_pending = False
        while self.apply_grants(sw, self.arbitrate(sw)):
            pass

    def arbitrate(self, sw: SwitchState) -> list[tuple[Port, Port]]:
        """One round: at most one grant per input and per output, round-robin per output."""
        base = sw.id * self.radix
        requests: dict[int, list[Port]] = {}
        for inp in sw.ports:
            if inp.in_q:
                pkt = inp.in_q[0]
                out_id = pkt.path[pkt.hop_index]
                requests.setdefault(out_id, []).append(inp)
        grants = []
        n = len(sw.ports)
        for out_id in sorted(requests):
            out = self.ports[out_id]
            cands = requests[out_id]
            start = sw.rr[out_id]
            cands.sort(key=lambda p: (p.id - base - start) % n)
            for inp in cands:
                if out.out_bytes + inp.in_q[0].wire_bytes <= out.out_cap:
                    grants.append((inp, out))
                    sw.rr[out_id] = (inp.id - base + 1) % n
                    break
        return grants

    def apply_grants(self, sw: SwitchState, grants: list[tuple[Port, Port]]) -> int:
        for inp, out in grants:
            pkt = inp.in_q.popleft()
            inp.in_bytes -= pkt.wire_bytes
            up = inp.peer
            up.credits += pkt.wire_bytes
            self.enqueue_output(out, pkt)
            self.try_transmit(up)
        return len(grants)
