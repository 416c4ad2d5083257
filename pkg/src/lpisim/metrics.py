"""Run observables and report emission.

Percentiles use the nearest-rank method on the sorted sample.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import jsonschema

SCHEMA_VERSION = "lpisim-report/1"
HIST_BINS = 200


def nearest_rank(sorted_values: Sequence, q: float):
    """q-th percentile (0 < q <= 100) of an already sorted sequence."""
    if not sorted_values:
        raise ValueError("percentile of an empty sample")
    k = max(1, math.ceil(q / 100.0 * len(sorted_values)))
    return sorted_values[k - 1]


@dataclass(frozen=True)
class LatencyStats:
    count: int
    mean: float
    p50: int
    p95: int
    p99: int
    max: int

    @classmethod
    def from_samples(cls, samples: Sequence[int]) -> "LatencyStats":
        if not samples:
            return cls(0, 0.0, 0, 0, 0, 0)
        s = sorted(samples)
        return cls(len(s), math.fsum(s) / len(s), nearest_rank(s, 50), nearest_rank(s, 95),
                   nearest_rank(s, 99), s[-1])

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class InactivityReport:
    port: int
    samples: int
    p99: int
    bin_width: float
    counts: list
    cdf: list

    def to_dict(self) -> dict:
        return asdict(self)


def histogram_report(samples: Sequence[int], port: int = -1, bins: int = HIST_BINS) -> InactivityReport:
    """Fixed-width histogram of idle periods up to the 99th percentile.

    Samples above the 99th percentile are left out of the bins but still count
    in the CDF denominator.
    """
    if not samples:
        raise ValueError("histogram_report needs at least one idle sample")
    s = sorted(samples)
    p99 = nearest_rank(s, 99)
    width = p99 / bins
    counts = [0] * bins
    for v in s:
        if v > p99:
            break
        i = bins - 1 if width == 0 else min(int(v // width), bins - 1)
        counts[i] += 1
    total = len(s)
    cdf, acc = [], 0
    for c in counts:
        acc += c
        cdf.append(acc / total)
    return InactivityReport(port, total, p99, width, counts, cdf)


def efficiency_series(deliveries: Sequence[tuple[int, int, int]], makespan: int, interval: int,
                      capacity_bps: float) -> list[float]:
    """Delivered payload bits per interval over ``capacity_bps * interval``.

    ``deliveries`` holds ``(rx_start_ps, rx_end_ps, payload_bits)``; bits are
    spread uniformly over each packet's reception window.
    """
    if interval <= 0:
        raise ValueError("sampling interval must be positive")
    n = -(-makespan // interval)
    bits = [0.0] * n
    for start, end, b in deliveries:
        if end <= start:
            bits[min(start // interval, n - 1)] += b
            continue
        span = end - start
        i = start // interval
        while i < n and i * interval < end:
            lo = max(start, i * interval)
            hi = min(end, (i + 1) * interval)
            if hi > lo:
                bits[i] += b * (hi - lo) / span
            i += 1
    cap = capacity_bps * interval * 1e-12
    return [x / cap for x in bits]


def overhead(policy: dict, baseline: dict) -> dict:
    """Execution-time and mean-latency overheads in percent."""
    def pct(a, b):
        if a == b:
            return 0.0
        return (a / b - 1.0) * 100.0 if b else 0.0
    return {
        "exec_time_pct": pct(policy["makespan_ps"], baseline["makespan_ps"]),
        "mean_latency_pct": pct(policy["latency"]["mean"], baseline["latency"]["mean"]),
    }


SUMMARY_SCHEMA = {
    "type": "object",
    "required": ["schema", "config", "makespan_ps", "makespan_ns", "latency", "energy",
                 "packets", "policy"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "config": {"type": "object"},
        "makespan_ps": {"type": "integer", "minimum": 0},
        "makespan_ns": {"type": "number", "minimum": 0},
        "latency": {
            "type": "object",
            "required": ["count", "mean", "p50", "p95", "p99", "max"],
        },
        "energy": {
            "type": "object",
            "required": ["total_j", "nodes_j", "switches_j", "ports_j", "network_j"],
        },
        "packets": {
            "type": "object",
            "required": ["injected", "delivered"],
        },
        "policy": {"type": "object", "required": ["kind"]},
        "counters": {"type": "object"},
        "baseline": {"type": ["object", "null"]},
        "overhead": {"type": ["object", "null"]},
        "savings": {"type": ["object", "null"]},
    },
}


def validate_summary(summary: dict) -> None:
    jsonschema.validate(summary, SUMMARY_SCHEMA)


def dumps_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def emit(summary: dict, outdir: str, efficiency: Optional[Sequence[float]] = None,
         interval_ps: int = 0, tpdt_log: Optional[Sequence[tuple]] = None,
         histograms: Optional[Sequence[InactivityReport]] = None) -> list[str]:
    """Write ``summary.json`` and the CSV series into ``outdir``; returns the paths."""
    validate_summary(summary)
    os.makedirs(outdir, exist_ok=True)
    written = []

    def put(name: str, text: str) -> None:
        path = os.path.join(outdir, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        written.append(path)

    put("summary.json", dumps_json(summary))
    if efficiency is not None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["interval", "start_ps", "efficiency"])
        for i, e in enumerate(efficiency):
            w.writerow([i, i * interval_ps, repr(e)])
        put("efficiency.csv", buf.getvalue())
    if tpdt_log is not None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time_ps", "port", "t_pdt_ps", "base_t_pdt_ps"])
        w.writerows(tpdt_log)
        put("tpdt.csv", buf.getvalue())
    if histograms:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["port", "bin", "lower_ps", "upper_ps", "count", "cdf"])
        for h in histograms:
            for i, (c, f) in enumerate(zip(h.counts, h.cdf)):
                w.writerow([h.port, i, repr(i * h.bin_width), repr((i + 1) * h.bin_width), c, repr(f)])
        put("inactivity.csv", buf.getvalue())
    return written
