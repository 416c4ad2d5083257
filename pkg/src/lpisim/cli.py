"""Command-line entry point: ``lpisim run|sweep|topo-dump|trace-check|gen-traffic``."""
from __future__ import annotations

import argparse
import json
import os
import sys

import yaml

from . import config as config_mod
from .experiment import output_root, run, sweep
from .topology import TopologyConfig, build
from .traffic import SyntheticPattern, generate, parse_trace, write_trace


def _fail(exc: BaseException, code: int = 2) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
    return code


def cmd_run(args) -> int:
    cfg = config_mod.load(args.config, args.set)
    s = run(cfg, outdir=args.output, cache_dir=args.cache)
    print(json.dumps({"output": s["_outdir"], "makespan_ps": s["makespan_ps"],
                      "overhead": s["overhead"], "savings": s["savings"]}, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    with open(args.sweep, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh) or {}
    template = doc.get("template", {})
    axes = dict(doc.get("axes", {}))
    for ov in args.set:
        config_mod.apply_override(template, ov)
    config_mod.resolve_paths(template, os.path.dirname(os.path.abspath(args.sweep)))
    for ax in args.axis:
        if "=" not in ax:
            raise config_mod.ConfigurationError(f"--axis {ax!r}: expected key=[v1, v2, ...]")
        k, v = ax.split("=", 1)
        axes[k.strip()] = yaml.safe_load(v)
    outdir = args.output or os.path.join(output_root(), "sweep")
    rows = sweep(template, axes, outdir, jobs=args.jobs)
    failed = sum(1 for r in rows if r["status"] != "ok")
    print(json.dumps({"output": outdir, "runs": len(rows), "failed": failed}))
    return 0 if failed == 0 else 1


def cmd_topo_dump(args) -> int:
    if args.config:
        topo_cfg = config_mod.load(args.config, args.set).topology
    else:
        topo_cfg = TopologyConfig(args.groups, args.nodes_per_group, args.switches_per_group,
                                  args.radix, args.kind)
    topo = build(topo_cfg)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            topo.dump_json(fh)
    else:
        topo.dump_json(sys.stdout)
        sys.stdout.write("\n")
    return 0


def cmd_trace_check(args) -> int:
    with open(args.trace, encoding="utf-8") as fh:
        prog = parse_trace(fh)
    if args.nodes is not None and prog.nranks > args.nodes:
        raise ValueError(f"{prog.nranks} ranks exceed {args.nodes} nodes")
    nbytes = sum(s[2] for st in prog.steps for s in st if s[0] == "s")
    print(json.dumps({"ranks": prog.nranks, "messages": prog.n_messages(), "bytes": nbytes,
                      "steps": sum(len(s) for s in prog.steps)}, sort_keys=True))
    return 0


def cmd_gen_traffic(args) -> int:
    pat = SyntheticPattern(args.kind, args.ranks, args.iterations, args.message_bytes,
                           args.burst_len, args.gap_ns, args.gap_jitter_ns, args.compute_ns,
                           args.seed)
    prog = generate(pat)
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
            write_trace(prog, fh)
    else:
        write_trace(prog, sys.stdout)
    return 0


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lpisim", description="EEE link power-management simulator")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="run one experiment (plus its always-on baseline)")
    p.add_argument("config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("-o", "--output")
    p.add_argument("--cache", help="baseline cache directory")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("sweep", help="Cartesian sweep described by a YAML file")
    p.add_argument("sweep")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--axis", action="append", default=[], metavar="KEY=[V1,V2]")
    p.add_argument("-o", "--output")
    p.add_argument("-j", "--jobs", type=int, default=1)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("topo-dump", help="write the topology as JSON")
    p.add_argument("--config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--kind", default="megafly")
    p.add_argument("--groups", type=int, default=65)
    p.add_argument("--nodes-per-group", type=int, default=64)
    p.add_argument("--switches-per-group", type=int, default=16)
    p.add_argument("--radix", type=int, default=16)
    p.add_argument("-o", "--output")
    p.set_defaults(fn=cmd_topo_dump)

    p = sub.add_parser("trace-check", help="validate a trace file")
    p.add_argument("trace")
    p.add_argument("--nodes", type=int)
    p.set_defaults(fn=cmd_trace_check)

    p = sub.add_parser("gen-traffic", help="generate a synthetic trace")
    p.add_argument("--kind", default="on_off_burst")
    p.add_argument("--ranks", type=int, default=4)
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--message-bytes", type=int, default=4096)
    p.add_argument("--burst-len", type=int, default=4)
    p.add_argument("--gap-ns", type=int, default=50_000)
    p.add_argument("--gap-jitter-ns", type=int, default=0)
    p.add_argument("--compute-ns", type=int, default=0)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("-o", "--output")
    p.set_defaults(fn=cmd_gen_traffic)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError, RuntimeError) as e:
        return _fail(e)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
