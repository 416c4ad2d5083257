"""Single runs against a cached always-on baseline, and parameter sweeps."""
from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Optional

from .config import ConfigurationError, ExperimentConfig, from_dict, set_path
from .energy import savings
from .metrics import dumps_json, emit, overhead
from .simulation import RunResult, simulate

OUTPUT_ENV = "LPISIM_OUTPUT_ROOT"


def output_root() -> str:
    return os.environ.get(OUTPUT_ENV, "runs")


def _cell(v) -> str:
    return v if isinstance(v, str) else json.dumps(v)


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def baseline_key(cfg: ExperimentConfig) -> str:
    d = cfg.to_dict()
    tr = d["traffic"]
    if tr["trace"] is not None:
        with open(tr["trace"], "rb") as fh:
            tr = dict(tr, trace=hashlib.sha256(fh.read()).hexdigest())
    power = {k: v for k, v in d["power"].items() if k != "sleep_profile"}
    return _digest({"traffic": tr, "topology": d["topology"], "fabric": d["fabric"],
                    "power": power, "seed": d["seed"]})[:20]


def baseline_config(cfg: ExperimentConfig) -> ExperimentConfig:
    base = cfg.copy()
    base.policy.kind = "always_on"
    base.policy.t_pdt_ns = None
    return base


def _baseline_record(res: RunResult) -> dict:
    s = res.summary()
    return {"makespan_ps": s["makespan_ps"], "latency": s["latency"], "energy": s["energy"]}


def _savings_pct(res: RunResult, base: dict) -> dict:
    from .energy import EnergyReport
    e = base["energy"]
    b = EnergyReport(e["duration_ps"], e["nodes_j"], e["switches_j"], e["ports_j"],
                     e["delivered_bits"], e["port_state_ps"])
    return {k: v * 100.0 for k, v in savings(res.energy, b).items()}


def get_baseline(cfg: ExperimentConfig, cache_dir: Optional[str]) -> tuple[dict, Optional[RunResult]]:
    path = None
    if cache_dir:
        path = os.path.join(cache_dir, f"baseline-{baseline_key(cfg)}.json")
        if os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                return json.load(fh), None
    res = simulate(baseline_config(cfg), keep_objects=False)
    rec = json.loads(json.dumps(_baseline_record(res)))
    if path:
        os.makedirs(cache_dir, exist_ok=True)
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(dumps_json(rec))
        os.replace(tmp, path)
    return rec, res


def run(cfg: ExperimentConfig, outdir: Optional[str] = None, cache_dir: Optional[str] = None,
        write: bool = True) -> dict:
    """Run the baseline (unless cached) and the policy; emit the comparative report."""
    cfg.validate()
    outdir = outdir or cfg.output or os.path.join(output_root(), _digest(cfg.to_dict())[:12])
    if cache_dir is None:
        cache_dir = os.path.join(os.path.dirname(os.path.abspath(outdir)), ".baseline-cache")
    base, base_res = get_baseline(cfg, cache_dir)
    if cfg.policy.kind == "always_on" and base_res is not None:
        res = base_res
    else:
        res = simulate(cfg, keep_objects=False)
    summary = res.summary()
    summary["baseline"] = base
    summary["overhead"] = overhead(summary, base)
    summary["savings"] = _savings_pct(res, base)
    summary = json.loads(json.dumps(summary))
    if write:
        emit(summary, outdir, res.efficiency, res.sampling_ps,
             res.tpdt_log if cfg.metrics.tpdt_log else None, res.inactivity_reports())
    summary["_outdir"] = outdir
    return summary


# -- sweeps ---------------------------------------------------------------------

INDEX_FIELDS = ["run", "status", "makespan_ps", "exec_time_pct", "mean_latency_pct",
                "savings_total_pct", "savings_network_pct", "savings_ports_pct", "total_j", "error"]


def expand(template: dict, axes: dict) -> list[tuple[dict, dict]]:
    if not axes:
        raise ConfigurationError("sweep: no axes given")
    for k, vals in axes.items():
        if not isinstance(vals, list) or not vals:
            raise ConfigurationError(f"sweep axis {k!r}: must be a non-empty list")
    keys = list(axes)
    out = []
    for combo in itertools.product(*(axes[k] for k in keys)):
        data = json.loads(json.dumps(template))
        params = dict(zip(keys, combo))
        for k, v in params.items():
            set_path(data, k, v)
        out.append((params, data))
    return out


def _run_one(args):
    run_id, data, outdir, cache_dir = args
    try:
        cfg = from_dict(data)
        s = run(cfg, outdir=outdir, cache_dir=cache_dir)
        return run_id, "ok", {
            "makespan_ps": s["makespan_ps"],
            "exec_time_pct": s["overhead"]["exec_time_pct"],
            "mean_latency_pct": s["overhead"]["mean_latency_pct"],
            "savings_total_pct": s["savings"]["total"],
            "savings_network_pct": s["savings"]["network"],
            "savings_ports_pct": s["savings"]["ports"],
            "total_j": s["energy"]["total_j"],
        }, ""
    except Exception as e:  # recorded in the index; the sweep carries on
        return run_id, "failed", {}, f"{type(e).__name__}: {e}"


def sweep(template: dict, axes: dict, outdir: str, jobs: int = 1) -> list[dict]:
    runs = expand(template, axes)
    os.makedirs(outdir, exist_ok=True)
    cache_dir = os.path.join(outdir, ".baseline-cache")
    manifest_path = os.path.join(outdir, "manifest.json")
    manifest = {}
    if os.path.exists(manifest_path):
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    todo, rows = [], {}
    for i, (params, data) in enumerate(runs):
        run_id = f"run{i:04d}"
        h = _digest(data)
        prev = manifest.get(run_id)
        if prev and prev.get("hash") == h and prev.get("status") == "ok" and \
                os.path.exists(os.path.join(outdir, run_id, "summary.json")):
            rows[run_id] = prev
            continue
        manifest[run_id] = {"hash": h, "params": params, "status": "pending"}
        todo.append((run_id, data, os.path.join(outdir, run_id), cache_dir))

    def record(run_id, status, metrics, err):
        entry = manifest[run_id]
        entry.update(status=status, metrics=metrics, error=err)
        rows[run_id] = entry
        with open(manifest_path + ".tmp", "w", encoding="utf-8") as fh:
            fh.write(dumps_json(manifest))
        os.replace(manifest_path + ".tmp", manifest_path)

    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for res in pool.map(_run_one, todo):
                record(*res)
    else:
        for t in todo:
            record(*_run_one(t))

    axis_keys = list(axes)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(INDEX_FIELDS[:2] + axis_keys + INDEX_FIELDS[2:])
    out = []
    for i in range(len(runs)):
        run_id = f"run{i:04d}"
        e = rows[run_id]
        m = e.get("metrics") or {}
        w.writerow([run_id, e["status"]] + [_cell(e["params"][k]) for k in axis_keys] +
                   [m.get(k, "") for k in INDEX_FIELDS[2:-1]] + [e.get("error", "")])
        out.append(dict(run=run_id, **e))
    with open(os.path.join(outdir, "index.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    return out
