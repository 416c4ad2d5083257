#!/usr/bin/env python3
"""Idle-period histogram (200 bins up to p99) of the busiest port of a run."""
import argparse
import sys

from lpisim.config import load
from lpisim.simulation import simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("config")
    ap.add_argument("--set", action="append", default=[])
    ap.add_argument("--top", type=int, default=15, help="print only the N fullest bins")
    args = ap.parse_args()
    cfg = load(args.config, args.set)
    cfg.policy.kind, cfg.policy.t_pdt_ns = "always_on", None
    reports = simulate(cfg, keep_objects=False).inactivity_reports()
    if not reports:
        sys.exit("no idle periods recorded")
    rep = reports[0]
    print(f"port {rep.port}: {rep.samples} idle periods, p99 {rep.p99 / 1000:.1f} ns, "
          f"bin width {rep.bin_width / 1000:.2f} ns")
    fullest = sorted(range(len(rep.counts)), key=lambda i: -rep.counts[i])[:args.top]
    for i in sorted(fullest):
        lo = i * rep.bin_width / 1000
        print(f"  [{lo:10.1f}, {lo + rep.bin_width / 1000:10.1f}) ns  {rep.counts[i]:6d}  "
              f"cdf {rep.cdf[i]:.3f}")


if __name__ == "__main__":
    main()
