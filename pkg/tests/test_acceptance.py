"""Acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the pytest terminal
summary (and on stdout with ``-s``). Run directly with
``python3 tests/test_acceptance.py``.
"""
import filecmp
import os
import random
import sys

import pytest

from lpisim.config import ExperimentConfig, PolicySection, PowerSection, TrafficSection
from lpisim.des import NS, Simulator
from lpisim.energy import static_power, system_power_snapshot
from lpisim.experiment import run
from lpisim.fabric import Network
from lpisim.link_power import DEEP_SLEEP, FAST_WAKE, PowerState
from lpisim.policy import compute_local_bound, perfbound_tpdt, register_capacity
from lpisim.simulation import check_accounting, simulate
from lpisim.topology import TopologyConfig, build
from lpisim.traffic import SyntheticPattern, TraceProgram

from conftest import ACCEPTANCE
from oracles import (micro_config, pingpong, pingpong_timeline, rejected_handshake_scenario,
                     state_times)
from test_policy import scan_oracle

SMALL = TopologyConfig(groups=5, nodes_per_group=4, switches_per_group=4, radix=4)


def record(n, ok, text):
    ACCEPTANCE.append((n, bool(ok), text))
    print(f"{'PASS' if ok else 'FAIL'}  criterion {n:2d}: {text}")
    assert ok, text


@pytest.fixture(scope="module")
def default_topo():
    return build()


def test_c01_power_shares(default_topo):
    rows = [(None, 18.575, 12.214, 13.201), (FAST_WAKE, 12.136, 5.272, 8.432),
            (DEEP_SLEEP, 8.519, 1.372, 5.845)]
    worst = 0.0
    for prof, net_idle, ports_idle, net_full in rows:
        net = Network(Simulator(), default_topo, profile=prof or DEEP_SLEEP)
        if prof is not None:
            for p in net.ports:
                p.state = PowerState.SLEEP
        idle = system_power_snapshot(net)
        full = system_power_snapshot(net, [1.0] * default_topo.n_nodes)
        for got, want in ((idle.network_share, net_idle), (idle.ports_share, ports_idle),
                          (full.network_share, net_full)):
            worst = max(worst, abs(100 * got - want))
    record(1, worst < 0.01, f"network/links shares within {worst:.4f} pp of the reference shares (tol 0.01)")


def test_c02_counts_and_aggregates(default_topo):
    t = default_topo
    idle = static_power(t.n_nodes, t.n_switches, t.n_ports, 24.0, 0.0)
    full = static_power(t.n_nodes, t.n_switches, t.n_ports, 24.0, 1.0)
    ok = ((t.n_switches, t.n_nodes, t.n_ports) == (1040, 4160, 20800)
          and idle.switches == pytest.approx(260e3) and idle.nodes == pytest.approx(3.328e6)
          and full.nodes == pytest.approx(4.992e6) and idle.ports == pytest.approx(499.2e3))
    record(2, ok, f"{t.n_switches} switches, {t.n_nodes} nodes, {t.n_ports} ports; "
                  f"{idle.switches / 1e3:g} kW, {idle.nodes / 1e6:g}/{full.nodes / 1e6:g} MW, "
                  f"{idle.ports / 1e3:g} kW")


def test_c03_local_bound():
    v = compute_local_bound({4: 0.6, 6: 0.4}, 0.01)
    record(3, abs(v - 0.0022) <= 1e-4, f"local bound = {v:.6f} (want 0.0022 +- 1e-4)")


def test_c04_control_timing():
    ser = Network(Simulator(), build(SMALL)).ser_time(64)
    net, delay = rejected_handshake_scenario()
    ok = ser == 1280 and net.rejections >= 1 and delay < 5 * NS
    record(4, ok, f"64 B control frame = {ser} ps; rejected handshake delays next send by "
                  f"{delay / 1000:.2f} ns (< 5 ns)")


def test_c05_register_table():
    a = register_capacity(32, 1e-9)
    b = register_capacity(16, 1e-6)
    # reference capacities, each compared at the precision it is quoted with
    table = {(16, 1e-9): 66e-6, (16, 1e-8): 655e-6, (16, 1e-7): 7e-3, (16, 1e-6): 66e-3,
             (32, 1e-9): 4.3, (32, 1e-8): 43, (32, 1e-7): 429, (32, 1e-6): 4e3,
             (48, 1e-9): 2.81e5, (48, 1e-8): 3e6, (48, 1e-7): 28e6, (48, 1e-6): 2.81e8,
             (64, 1e-9): 1.8e10, (64, 1e-8): 1.84e11, (64, 1e-7): 2e12, (64, 1e-6): 1.8e13,
             (128, 1e-9): 3.4e29, (128, 1e-8): 3e30, (128, 1e-7): 3.4e31, (128, 1e-6): 3.4e32}

    def sig(x):
        return len(f"{x:e}".split("e")[0].replace(".", "").rstrip("0"))

    def matches(got, want):
        digits = max(sig(want), 1)
        return float(f"{got:.{digits - 1}e}") == pytest.approx(want, rel=1e-9)
    bad = [k for k, v in table.items() if not matches(register_capacity(*k), v)]
    ok = a == 2 ** 32 * 1e-9 and round(a, 3) == 4.295 and round(b * 1e3) == 66 and not bad
    record(5, ok, f"32-bit @1 ns = {a:.3f} s, 16-bit @1 us = {b * 1e3:.1f} ms; "
                  f"{len(table) - len(bad)}/{len(table)} cells match")


PATTERNS = [
    SyntheticPattern(kind="on_off_burst", ranks=8, iterations=3, message_bytes=5000, seed=1),
    SyntheticPattern(kind="on_off_burst", ranks=6, iterations=4, gap_ns=3000, gap_jitter_ns=2000,
                     seed=2),
    SyntheticPattern(kind="allreduce_like", ranks=8, iterations=3, message_bytes=9000,
                     compute_ns=500, seed=3),
    SyntheticPattern(kind="uniform_random", ranks=10, iterations=3, message_bytes=3000,
                     burst_len=3, gap_ns=1000, seed=4),
    SyntheticPattern(kind="uniform_random", ranks=20, iterations=2, message_bytes=64,
                     burst_len=5, gap_ns=0, seed=5),
]


def small_cfg(pattern, kind="always_on", t_pdt_ns=None, profile="deep_sleep", **pol):
    return ExperimentConfig(topology=SMALL, power=PowerSection(sleep_profile=profile),
                            policy=PolicySection(kind=kind, t_pdt_ns=t_pdt_ns, **pol),
                            traffic=TrafficSection(pattern=pattern)).validate()


def test_c06_baseline_equivalence(tmp_path):
    bad = []
    for i, pat in enumerate(PATTERNS):
        a = simulate(small_cfg(pat))
        b = simulate(small_cfg(pat, "fixed_pdt", "inf"))
        check_accounting(a)
        check_accounting(b)
        s = run(small_cfg(pat, "fixed_pdt", "inf"), outdir=str(tmp_path / f"r{i}"))
        if (a.makespan != b.makespan or a.latencies != b.latencies
                or any(v != 0.0 for v in s["savings"].values())
                or s["overhead"]["exec_time_pct"] != 0.0):
            bad.append(i)
    record(6, not bad, f"always_on == fixed_pdt(inf) on {len(PATTERNS) - len(bad)}/"
                       f"{len(PATTERNS)} synthetic traces (makespan, latencies, 0 % savings)")


def test_c07_bin_scan_oracle():
    rng = random.Random(2024)
    w, cap = 1000, 10 ** 9
    mism = 0
    for _ in range(1000):
        counts = {rng.randrange(200): rng.randrange(1, 50) for _ in range(rng.randrange(0, 25))}
        N = rng.choice([rng.uniform(0, 100), float(rng.randrange(0, 100))])
        if perfbound_tpdt(counts, N, cap, w) != scan_oracle(counts, N, cap, w):
            mism += 1
    record(7, mism == 0, f"bin scan equals brute-force oracle on {1000 - mism}/1000 histograms")


def test_c08_timeline_oracle():
    bad = []
    for prof in (FAST_WAKE, DEEP_SLEEP):
        for tpdt_ns in (0, 1000, None):
            res = simulate(micro_config("fixed_pdt", tpdt_ns, prof.name),
                           program=pingpong(3, 10_000), log_states=True)
            P = None if tpdt_ns is None else tpdt_ns * NS
            log, lat, mk = pingpong_timeline(3, 10_000 * NS, P, prof.t_w, prof.t_s,
                                             10 * NS, 100 * NS, 1280)
            check_accounting(res)
            times = state_times(log, mk)
            ok = (res.makespan == mk and res.latencies == lat
                  and sorted(res.network.state_log) == log
                  and all({s.value: v for s, v in p.time_in.items() if v}
                          == {k: v for k, v in times[p.id].items() if v}
                          for p in res.network.ports))
            if not ok:
                bad.append((prof.name, tpdt_ns))
    record(8, not bad, f"ping-pong timeline matches the closed form in {6 - len(bad)}/6 "
                       f"(t_PDT x sleep state) cases")


def test_c09_accounting():
    runs = 0
    for pat in PATTERNS:
        for kind, t in (("fixed_pdt", 0), ("fixed_pdt", 700), ("perfbound", None),
                        ("perfbound_correct", None)):
            for prof in ("fast_wake", "deep_sleep"):
                cfg = small_cfg(pat, kind, t, prof, recalc_ns=20_000, w_bin_ns=100,
                                retention="circular", hist_n=32)
                check_accounting(simulate(cfg))
                runs += 1
    record(9, True, f"state time = makespan, injected = delivered, energy additive in {runs} runs")


def gapped_pingpong(n, short_ns, long_ns, every):
    p = TraceProgram(2)
    for i in range(n):
        p.compute(0, long_ns if i % every == every - 1 else short_ns)
        p.send(0, 1, 64)
        p.recv(0, 1)
        p.recv(1, 0)
        p.send(1, 0, 64)
    return p


def test_c10_directional():
    pat = SyntheticPattern(kind="on_off_burst", ranks=8, iterations=5, message_bytes=4096,
                           burst_len=4, gap_ns=200_000, seed=6)
    base = simulate(small_cfg(pat)).energy.ports_j
    save = {}
    for prof in ("fast_wake", "deep_sleep"):
        res = simulate(small_cfg(pat, "fixed_pdt", 1000, prof))
        check_accounting(res)
        save[prof] = 1 - res.energy.ports_j / base
    first = save["deep_sleep"] > save["fast_wake"]

    # every 2nd..4th gap is slightly above the threshold PerfBound settles on
    worse = []
    cases = 0
    for every in (2, 3, 4):
        for long_ns in (1500, 2000):
            prog = gapped_pingpong(600, 100, long_ns, every)
            mk0 = simulate(micro_config(), program=prog).makespan
            ovh = {}
            for kind in ("perfbound", "perfbound_correct"):
                cfg = micro_config(kind, profile="fast_wake", bound=0.2, recalc_ns=200_000,
                                   retention="circular", hist_n=60, w_bin_ns=100,
                                   max_t_pdt_ns=100_000, n_r=16)
                res = simulate(cfg, program=prog)
                check_accounting(res)
                ovh[kind] = res.makespan / mk0 - 1
            cases += 1
            if ovh["perfbound_correct"] > ovh["perfbound"]:
                worse.append((every, long_ns))
    record(10, first and not worse,
           f"port savings deep_sleep {100 * save['deep_sleep']:.1f} % > fast_wake "
           f"{100 * save['fast_wake']:.1f} %; PerfBoundCorrect overhead <= PerfBound in "
           f"{cases - len(worse)}/{cases} near-threshold workloads")


def test_c11_determinism(tmp_path):
    cfg = small_cfg(PATTERNS[1], "perfbound_correct", None, "fast_wake", recalc_ns=20_000,
                    w_bin_ns=100)
    cfg.metrics.tpdt_log = True
    a, b = tmp_path / "a", tmp_path / "b"
    run(cfg.copy(), outdir=str(a / "out"))
    run(cfg.copy(), outdir=str(b / "out"))
    names = sorted(os.listdir(a / "out"))
    _, mismatch, errors = filecmp.cmpfiles(a / "out", b / "out", names, shallow=False)
    ok = names == sorted(os.listdir(b / "out")) and not mismatch and not errors
    record(11, ok, f"{len(names)} report files byte-identical across repeated runs")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
