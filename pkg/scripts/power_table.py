#!/usr/bin/env python3
"""Network share of total system power for each static port state."""
import argparse

from lpisim.energy import static_power
from lpisim.link_power import DEEP_SLEEP, FAST_WAKE, WAKE
from lpisim.topology import TopologyConfig, build


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--groups", type=int, default=65)
    ap.add_argument("--nodes-per-group", type=int, default=64)
    ap.add_argument("--switches-per-group", type=int, default=16)
    ap.add_argument("--radix", type=int, default=16)
    args = ap.parse_args()
    t = build(TopologyConfig(args.groups, args.nodes_per_group, args.switches_per_group, args.radix))
    print(f"{t.n_switches} switches, {t.n_nodes} nodes, {t.n_ports} ports")
    print(f"{'state':<11}{'W':>6}{'net idle %':>12}{'net full %':>12}{'ports idle %':>14}"
          f"{'ports full %':>14}")
    for prof in (WAKE, FAST_WAKE, DEEP_SLEEP):
        idle = static_power(t.n_nodes, t.n_switches, t.n_ports, prof.power, 0.0)
        full = static_power(t.n_nodes, t.n_switches, t.n_ports, prof.power, 1.0)
        print(f"{prof.name:<11}{prof.power:>6.1f}{100 * idle.network_share:>12.3f}"
              f"{100 * full.network_share:>12.3f}{100 * idle.ports_share:>14.3f}"
              f"{100 * full.ports_share:>14.3f}")


if __name__ == "__main__":
    main()
