"""Wire a topology, fabric, power policy and trace program into one run."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional, TextIO

from .config import ExperimentConfig, ns_to_ps
from .des import SimulationError, Simulator
from .energy import EnergyReport, energy_report
from .fabric import Network
from .link_power import PowerState
from .metrics import SCHEMA_VERSION, LatencyStats, efficiency_series, histogram_report
from .policy import AlwaysOn, CorrectionState, FixedPDT, PerfBound
from .topology import TopologyGraph, build
from .traffic import TraceProgram, TrafficEngine, generate, parse_trace


def load_program(cfg: ExperimentConfig, topo: TopologyGraph) -> tuple[TraceProgram, dict]:
    tr = cfg.traffic
    if tr.trace is not None:
        with open(tr.trace, "rb") as fh:
            raw = fh.read()
        prog = parse_trace(raw.decode("utf-8"))
        return prog, {"trace_sha256": hashlib.sha256(raw).hexdigest()}
    return generate(tr.pattern, topo), {}


def make_policy_factory(cfg: ExperimentConfig, topo: TopologyGraph):
    pol = cfg.policy
    profile = cfg.power.profile()
    if pol.kind == "always_on":
        shared = AlwaysOn()
        return lambda port: shared
    if pol.kind == "fixed_pdt":
        shared = FixedPDT(pol.tpdt_ps())
        return lambda port: shared
    hist_cfg = pol.hist_config()
    bound_cfg = pol.bound_config(profile.t_w)
    max_tpdt = ns_to_ps(pol.max_t_pdt_ns)
    initial = ns_to_ps(pol.initial_t_pdt_ns)
    correct = pol.kind == "perfbound_correct"

    def factory(port):
        corr = CorrectionState(pol.n_r, max_tpdt) if correct else None
        return PerfBound(hist_cfg, bound_cfg, topo.diameter, max_tpdt, initial, corr)
    return factory


@dataclass
class RunResult:
    config: ExperimentConfig
    makespan: int
    latencies: list[int]
    energy: EnergyReport
    efficiency: list[float]
    sampling_ps: int
    idle_samples: dict[int, list[int]]
    tpdt_log: list[tuple]
    counters: dict
    extra: dict = field(default_factory=dict)
    network: Optional[Network] = None
    engine: Optional[TrafficEngine] = None
    sim: Optional[Simulator] = None

    @property
    def latency_stats(self) -> LatencyStats:
        return LatencyStats.from_samples(self.latencies)

    def inactivity_reports(self):
        return [histogram_report(s, port) for port, s in sorted(self.idle_samples.items()) if s]

    def summary(self) -> dict:
        cfg = self.config
        pol = cfg.policy.describe()
        pol["sleep_profile"] = cfg.power.sleep_profile
        return {
            "schema": SCHEMA_VERSION,
            "config": cfg.to_dict(),
            "inputs": self.extra,
            "makespan_ps": self.makespan,
            "makespan_ns": self.makespan / 1000,
            "latency": self.latency_stats.to_dict(),
            "energy": self.energy.to_dict(),
            "packets": {"injected": self.counters["injected"],
                        "delivered": self.counters["delivered"],
                        "messages": self.counters["messages"]},
            "policy": pol,
            "counters": self.counters,
            "baseline": None,
            "overhead": None,
            "savings": None,
        }


def simulate(cfg: ExperimentConfig, program: Optional[TraceProgram] = None,
             topo: Optional[TopologyGraph] = None, log_states: bool = False,
             event_log: Optional[TextIO] = None, keep_objects: bool = True) -> RunResult:
    topo = topo or build(cfg.topology)
    extra = {}
    if program is None:
        program, extra = load_program(cfg, topo)
    params = cfg.fabric.build()
    profile = cfg.power.profile()
    power = cfg.power.params()
    sim = Simulator(max_events=cfg.max_events, event_log=event_log)
    net = Network(sim, topo, params, profile, power.port_wake, make_policy_factory(cfg, topo),
                  reject_retry=cfg.policy.reject_retry, log_states=log_states)
    engine = TrafficEngine(sim, net, program, cfg.traffic.mapping, params.mtu)

    sel = cfg.metrics.inactivity_ports
    track_all = sel == "auto"
    tracked = set() if sel in ("auto", "none", None) else {int(p) for p in sel}
    idle_samples: dict[int, list[int]] = {}

    def on_idle_end(port, idle, miss):
        port.policy.observe_idle(idle, miss, port.armed_tpdt, sim.now)
        if track_all or port.id in tracked:
            idle_samples.setdefault(port.id, []).append(idle)
    net.on_idle_end = on_idle_end

    tpdt_log: list[tuple] = []
    active: set[int] = set()
    adaptive = cfg.policy.kind in ("perfbound", "perfbound_correct")
    if adaptive:
        net.on_activity = lambda port: active.add(port.id)
        X = ns_to_ps(cfg.policy.recalc_ns)

        def tick():
            for pid in sorted(active):
                pol = net.ports[pid].policy
                old = pol.tpdt
                new = pol.recalc()
                if cfg.metrics.tpdt_log and new != old:
                    tpdt_log.append((sim.now, pid, new, pol.base_tpdt))
            active.clear()
            if engine.unfinished:
                check_stall()
                sim.schedule_in(X, "sampling-tick", tick)
        sim.schedule(X, "sampling-tick", tick)

    def check_stall():
        if net.injected == net.delivered and all(
                r.state in ("recv", "done") for r in engine.ranks):
            raise SimulationError(f"deadlock: ranks {engine.blocked_ranks()} wait on receives "
                                  "that can never be satisfied")

    engine.on_finished = sim.stop
    net.start()
    engine.start()
    sim.run_until()
    if engine.makespan is None:
        check_stall()
        raise SimulationError("simulation stopped before all ranks completed")
    makespan = engine.makespan
    for p in net.ports:
        p.time_in[p.state] += makespan - p.state_entered_at
        p.state_entered_at = makespan
    # close compute intervals still open at the end (none for a finished run)
    latencies = [pkt.delivered_at - pkt.created_at for pkt in engine.packets
                 if pkt.delivered_at is not None]
    deliveries = [(pkt.delivered_at - net.ser_time(pkt.wire_bytes), pkt.delivered_at, pkt.size * 8)
                  for pkt in engine.packets if pkt.delivered_at is not None]
    payload_bits = sum(b for _, _, b in deliveries)
    energy = energy_report(makespan, (p.time_in for p in net.ports),
                           (b / 100 for b in engine.node_busy), topo.n_switches, profile,
                           payload_bits, power)
    sampling = ns_to_ps(cfg.metrics.sampling_ns)
    eff = efficiency_series(deliveries, makespan, sampling,
                            topo.n_nodes * params.bandwidth_bps)
    if track_all and idle_samples:
        best = max(sorted(idle_samples), key=lambda k: len(idle_samples[k]))
        idle_samples = {best: idle_samples[best]}
    counters = {
        "events": sim.dispatched,
        "injected": net.injected,
        "delivered": net.delivered,
        "messages": len(engine.messages),
        "handshakes": net.handshakes,
        "rejections": net.rejections,
        "sleeps": net.sleeps,
        "ctrl_frames": net.ctrl_frames,
        "transitions": sum(p.transitions for p in net.ports),
    }
    return RunResult(cfg, makespan, latencies, energy, eff, sampling, idle_samples, tpdt_log,
                     counters, extra,
                     net if keep_objects else None, engine if keep_objects else None,
                     sim if keep_objects else None)


def check_accounting(result: RunResult) -> None:
    """Raise AssertionError if a conservation/accounting invariant is broken."""
    net = result.network
    for p in net.ports:
        total = sum(p.time_in.values())
        assert total == result.makespan, f"port {p.id}: state time {total} != {result.makespan}"
    assert net.injected == net.delivered, f"injected {net.injected} != delivered {net.delivered}"
    e = result.energy
    parts = e.nodes_j + e.switches_j + e.ports_j
    assert abs(e.total_j - parts) <= 1e-9 * max(1.0, abs(parts))
    for p in net.ports:
        assert p.out_bytes <= p.out_cap and p.in_bytes <= p.in_cap
    for a, b in result.network.topo.links:
        pa, pb = net.ports[a], net.ports[b]
        if pa.state is not PowerState.HANDSHAKING and pb.state is not PowerState.HANDSHAKING:
            assert pa.state is pb.state, f"link {a}-{b} endpoints disagree: {pa.state} vs {pb.state}"
