#!/usr/bin/env python3
"""Savings and overheads of fixed thresholds under both sleep states.

Writes a sweep directory (one report per run plus index.csv) and prints the
index as a table.
"""
import argparse
import csv
import os

import yaml

from lpisim.experiment import sweep

HERE = os.path.dirname(os.path.abspath(__file__))
DEFAULT_TPDT = [0, 100, 1_000, 10_000, 100_000, 1_000_000, 10_000_000, 100_000_000, 1e9]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=os.path.join(HERE, "..", "configs", "sweep_fixed.yaml"),
                    help="sweep file whose template is reused (axes are replaced)")
    ap.add_argument("--tpdt-ns", type=float, nargs="+", default=DEFAULT_TPDT)
    ap.add_argument("-o", "--output", default="runs/fixed_pdt_sweep")
    ap.add_argument("-j", "--jobs", type=int, default=1)
    args = ap.parse_args()
    with open(args.config, encoding="utf-8") as fh:
        template = yaml.safe_load(fh)["template"]
    tr = template.get("traffic", {})
    if isinstance(tr.get("trace"), str) and not os.path.isabs(tr["trace"]):
        tr["trace"] = os.path.join(os.path.dirname(os.path.abspath(args.config)), tr["trace"])
    axes = {"power.sleep_profile": ["fast_wake", "deep_sleep"], "policy.t_pdt_ns": args.tpdt_ns}
    sweep(template, axes, args.output, jobs=args.jobs)
    with open(os.path.join(args.output, "index.csv"), encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    print(f"{'state':<12}{'t_PDT ns':>12}{'exec +%':>10}{'lat +%':>10}{'ports -%':>10}"
          f"{'total -%':>10}")
    for r in rows:
        if r["status"] != "ok":
            print(f"{r['run']}: {r['error']}")
            continue
        print(f"{r['power.sleep_profile'].strip(chr(34)):<12}{float(r['policy.t_pdt_ns']):>12g}"
              f"{float(r['exec_time_pct']):>10.2f}{float(r['mean_latency_pct']):>10.2f}"
              f"{float(r['savings_ports_pct']):>10.2f}{float(r['savings_total_pct']):>10.2f}")


if __name__ == "__main__":
    main()
