#!/usr/bin/env python3
"""PerfBound against PerfBoundCorrect over degradation bounds and histogram
retention schemes, on a synthetic workload of the small megafly."""
import argparse

from lpisim.config import (ExperimentConfig, MetricsSection, PolicySection, PowerSection,
                           TrafficSection)
from lpisim.metrics import overhead
from lpisim.simulation import simulate
from lpisim.topology import TopologyConfig
from lpisim.traffic import SyntheticPattern


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--profile", default="fast_wake", choices=["fast_wake", "deep_sleep"])
    ap.add_argument("--bounds", type=float, nargs="+", default=[0.01, 0.02, 0.05])
    ap.add_argument("--recalc-ns", type=float, default=100_000)
    ap.add_argument("--iterations", type=int, default=50)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    topo = TopologyConfig(groups=5, nodes_per_group=4, switches_per_group=4, radix=4)
    pat = SyntheticPattern(kind="on_off_burst", ranks=16, iterations=args.iterations,
                           message_bytes=4096, burst_len=2, gap_ns=4000, gap_jitter_ns=3000,
                           seed=args.seed)

    def cfg(**pol):
        return ExperimentConfig(topology=topo, power=PowerSection(sleep_profile=args.profile),
                                policy=PolicySection(**pol), traffic=TrafficSection(pattern=pat),
                                metrics=MetricsSection(inactivity_ports="none")).validate()
    base = simulate(cfg(kind="always_on"))
    bsum = base.summary()
    print(f"baseline makespan {base.makespan / 1e6:.3f} us, ports {base.energy.ports_j:.4g} J")
    print(f"{'policy':<19}{'retention':<15}{'bound':>6}{'exec +%':>10}{'lat +%':>10}"
          f"{'ports -%':>10}")
    for retention in ("self_clearing", "circular", "unbounded"):
        for bound in args.bounds:
            for kind in ("perfbound", "perfbound_correct"):
                res = simulate(cfg(kind=kind, bound=bound, recalc_ns=args.recalc_ns,
                                   retention=retention, hist_n=250, w_bin_ns=100))
                ov = overhead(res.summary(), bsum)
                sv = 100 * (1 - res.energy.ports_j / base.energy.ports_j)
                print(f"{kind:<19}{retention:<15}{bound:>6.2f}{ov['exec_time_pct']:>10.2f}"
                      f"{ov['mean_latency_pct']:>10.2f}{sv:>10.2f}")


if __name__ == "__main__":
    main()
