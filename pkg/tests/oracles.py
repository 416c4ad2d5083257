"""Closed-form expectations used by several test modules."""
from lpisim.des import NS, Simulator
from lpisim.fabric import FabricParams, Network
from lpisim.link_power import FAST_WAKE
from lpisim.policy import FixedPDT
from lpisim.topology import micro
from lpisim.config import ExperimentConfig, FabricSection, PolicySection, PowerSection, TrafficSection
from lpisim.topology import TopologyConfig
from lpisim.traffic import TraceProgram

W_, HS, TD, S_, TU = "wake", "handshaking", "transition_down", "sleep", "transition_up"

MICRO = TopologyConfig(groups=1, nodes_per_group=2, switches_per_group=1, radix=2,
                       kind="single_switch")


def micro_config(policy="always_on", t_pdt_ns=None, profile="deep_sleep", wire_ns=10.0, **pol):
    return ExperimentConfig(
        topology=MICRO,
        fabric=FabricSection(wire_local_ns=wire_ns, wire_global_ns=wire_ns),
        power=PowerSection(sleep_profile=profile),
        policy=PolicySection(kind=policy, t_pdt_ns=t_pdt_ns, **pol),
        traffic=TrafficSection(trace="<inline>"),
    )


def pingpong(rounds, gap_ns, nbytes=64):
    p = TraceProgram(2)
    for _ in range(rounds):
        p.compute(0, gap_ns)
        p.send(0, 1, nbytes)
        p.recv(0, 1)
        p.recv(1, 0)
        p.compute(1, gap_ns)
        p.send(1, 0, nbytes)
    return p


def pingpong_timeline(rounds, gap, P, t_w, t_s, wire, trav, ser):
    """Expected (state log, latencies, makespan) on the 2-node switch.

    All times in ps; P is None for a threshold that never expires. Port ids:
    switch ports 0 and 1 face NIC ports 2 (node 0) and 3 (node 1). Requires
    every gap to be long enough for both links to be asleep again.
    """
    d = ser + wire  # one control frame, end to end
    log = []

    def hs(a, b, t, into, done, dur):
        # a requests at t, b answers on arrival, both start at the requester's sync
        log.append((t, a, *into[0]))
        log.append((t + d, b, *into[0]))
        sync = t + 2 * d
        for p in (a, b):
            log.append((sync, p, *into[1]))
            log.append((sync + dur, p, *done))
        return sync + dur

    down = ((W_, HS), (HS, TD)), (TD, S_)
    up = ((S_, HS), (HS, TU)), (TU, W_)
    lat = []
    if P is not None:
        log.extend((P, p, W_, HS) for p in range(4))
        log.extend((P + 2 * d, p, HS, TD) for p in (0, 2, 1, 3))
        log.extend((P + 2 * d + t_s, p, TD, S_) for p in range(4))
    t = gap
    for k in range(2 * rounds):
        src_nic, sw_in, sw_out, dst_nic = (2, 0, 1, 3) if k % 2 == 0 else (3, 1, 0, 2)
        if P is None:
            deliver = t + wire + trav + wire + ser
        else:
            w1 = hs(src_nic, sw_in, t, up[0], up[1], t_w)
            hs(src_nic, sw_in, w1 + ser + P, down[0], down[1], t_s)
            u = w1 + wire + trav
            w2 = hs(sw_out, dst_nic, u, up[0], up[1], t_w)
            hs(sw_out, dst_nic, w2 + ser + P, down[0], down[1], t_s)
            deliver = w2 + wire + ser
        lat.append(deliver - t)
        t = deliver + gap
    makespan = t - gap
    kept = sorted(e for e in log if e[0] < makespan)
    assert all(e[0] != makespan for e in log), "oracle event coincides with the end of the run"
    return kept, lat, makespan


def state_times(log, makespan, n_ports=4):
    """Per-port time spent in each state, rebuilt from a state log."""
    cur = {p: (0, W_) for p in range(n_ports)}
    out = {p: {} for p in range(n_ports)}
    for t, p, old, new in sorted(log):
        since, st = cur[p]
        assert st == old
        out[p][st] = out[p].get(st, 0) + t - since
        cur[p] = (t, new)
    for p, (since, st) in cur.items():
        out[p][st] = out[p].get(st, 0) + makespan - since
    return out


def rejected_handshake_scenario(retry="rearm"):
    """Zero-wire 2-node switch. Switch port 0 streams 32 KiB to node 0 from
    100 ns on; node 0 sends 64 B at 120 ns (its port then asks to sleep and is
    refused) and another 64 B at 122 ns, while that handshake is in flight.

    Returns (network, delay from the second send to its transmission start).
    """
    sim = Simulator()
    pol = FixedPDT(0)
    net = Network(sim, micro(2), FabricParams(wire_local=0, wire_global=0), FAST_WAKE,
                  policy_factory=lambda p: pol, reject_retry=retry, log_states=True)
    second = []

    def inject(src, dst, size, keep=False):
        pkt = net.new_packet(src, dst, size)
        if keep:
            second.append(pkt)
        net.inject(pkt)
    for _ in range(8):
        sim.schedule(0, "inject", inject, 1, 0, 4096)
    sim.schedule(120 * NS, "inject", inject, 0, 1, 64)
    sim.schedule(122 * NS, "inject", inject, 0, 1, 64, True)
    starts = {}
    orig = net.try_transmit

    def spy(port):
        before = port.transmitting
        orig(port)
        if port.id == 2 and port.transmitting and not before:
            starts.setdefault(port.out_q[0].id, sim.now)
    net.try_transmit = spy
    sim.run_until()
    return net, starts[second[0].id] - 122 * NS
