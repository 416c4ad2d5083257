import csv
import json
import os

import pytest
import yaml

from lpisim import cli
from lpisim.config import ConfigurationError, apply_override, from_dict, load
from lpisim.experiment import baseline_key, expand, run, sweep
from lpisim.metrics import validate_summary

SMALL_TOPO = {"groups": 5, "nodes_per_group": 4, "switches_per_group": 4, "radix": 4}
PATTERN = {"kind": "on_off_burst", "ranks": 4, "iterations": 2, "message_bytes": 1024,
           "burst_len": 2, "gap_ns": 5000}


def base_doc(**policy):
    return {"topology": dict(SMALL_TOPO), "policy": {"kind": "fixed_pdt", "t_pdt_ns": 500, **policy},
            "traffic": {"pattern": dict(PATTERN)}, "metrics": {"sampling_ns": 2000}}


def write_yaml(path, doc):
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def test_unknown_field_names_path():
    doc = base_doc()
    doc["policy"]["tpdt"] = 3
    with pytest.raises(ConfigurationError, match="policy.tpdt: unknown field"):
        from_dict(doc)


@pytest.mark.parametrize("mutate, needle", [
    (lambda d: d["policy"].update(kind="magic"), "policy.kind"),
    (lambda d: d["policy"].update(t_pdt_ns=-1), "t_pdt_ns"),
    (lambda d: d["topology"].update(radix=6), "topology"),
    (lambda d: d.update(traffic={}), "traffic"),
    (lambda d: d["power"].update(sleep_profile="nap") if "power" in d else
     d.update(power={"sleep_profile": "nap"}), "sleep_profile"),
])
def test_invalid_configs(mutate, needle):
    doc = base_doc()
    mutate(doc)
    with pytest.raises(ConfigurationError, match=needle):
        from_dict(doc)


def test_override_and_inf():
    doc = base_doc()
    apply_override(doc, "policy.t_pdt_ns=inf")
    apply_override(doc, "power.sleep_profile=fast_wake")
    cfg = from_dict(doc)
    assert cfg.policy.tpdt_ps() is None and cfg.power.sleep_profile == "fast_wake"
    with pytest.raises(ConfigurationError):
        apply_override(doc, "novalue")


def test_relative_trace_resolved_against_config(tmp_path):
    (tmp_path / "t").mkdir()
    (tmp_path / "t" / "x.trace").write_text("vsim-trace v1 2\n0 s 1 64\n1 r 0\n")
    doc = base_doc()
    doc["traffic"] = {"trace": "t/x.trace"}
    cfg = load(write_yaml(tmp_path / "c.yaml", doc))
    assert cfg.traffic.trace == str(tmp_path / "t" / "x.trace")


def test_run_writes_valid_report(tmp_path):
    s = run(from_dict(base_doc()), outdir=str(tmp_path / "out"))
    out = tmp_path / "out"
    assert sorted(os.listdir(out)) == ["efficiency.csv", "inactivity.csv", "summary.json"]
    summary = json.loads((out / "summary.json").read_text())
    validate_summary(summary)
    assert summary["baseline"]["makespan_ps"] <= summary["makespan_ps"]
    assert summary["policy"] == {"kind": "fixed_pdt", "t_pdt_ps": 500_000,
                                 "reject_retry": "rearm", "sleep_profile": "deep_sleep"}
    rows = list(csv.reader(open(out / "efficiency.csv")))
    assert len(rows) - 1 == -(-summary["makespan_ps"] // 2_000_000)
    assert s["_outdir"] == str(out)


def test_cached_baseline_gives_same_bytes(tmp_path):
    cache = str(tmp_path / "cache")
    run(from_dict(base_doc()), outdir=str(tmp_path / "a"), cache_dir=cache)
    assert len(os.listdir(cache)) == 1
    run(from_dict(base_doc()), outdir=str(tmp_path / "b"), cache_dir=cache)
    for name in os.listdir(tmp_path / "a"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_baseline_key_ignores_policy_but_not_traffic():
    a, b = from_dict(base_doc()), from_dict(base_doc(t_pdt_ns=0))
    b.power.sleep_profile = "fast_wake"
    assert baseline_key(a) == baseline_key(b)
    c = from_dict(base_doc())
    c.traffic.pattern = c.traffic.pattern.__class__(**{**PATTERN, "seed": 9})
    assert baseline_key(c) != baseline_key(a)


def test_expand_cartesian_and_empty_axis():
    runs = expand(base_doc(), {"policy.t_pdt_ns": [0, 10], "power.sleep_profile": ["fast_wake",
                                                                                   "deep_sleep"]})
    assert len(runs) == 4
    assert runs[1][1]["power"]["sleep_profile"] == "deep_sleep"
    with pytest.raises(ConfigurationError, match="non-empty"):
        expand(base_doc(), {"policy.t_pdt_ns": []})


def test_sweep_idempotent_and_records_failures(tmp_path):
    axes = {"policy.t_pdt_ns": [0, 1000], "power.sleep_profile": ["fast_wake", "deep_sleep"]}
    out = str(tmp_path / "sw")
    rows = sweep(base_doc(), axes, out)
    assert [r["status"] for r in rows] == ["ok"] * 4
    index = list(csv.DictReader(open(os.path.join(out, "index.csv"))))
    assert len(index) == 4 and index[2]["policy.t_pdt_ns"] == "1000"
    assert index[1]["power.sleep_profile"] == "deep_sleep"
    stamp = os.path.getmtime(os.path.join(out, "run0000", "summary.json"))
    sweep(base_doc(), axes, out)
    assert os.path.getmtime(os.path.join(out, "run0000", "summary.json")) == stamp
    bad = sweep(base_doc(), {"policy.t_pdt_ns": [0, -5]}, str(tmp_path / "bad"))
    assert [r["status"] for r in bad] == ["ok", "failed"]
    assert "t_pdt_ns" in bad[1]["error"]


def test_cli_run_and_error_json(tmp_path, capsys):
    cfg = write_yaml(tmp_path / "c.yaml", base_doc())
    assert cli.main(["run", cfg, "-o", str(tmp_path / "o"), "--set", "policy.t_pdt_ns=0"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["output"] == str(tmp_path / "o")
    bad = base_doc()
    bad["topology"]["radix"] = 7
    code = cli.main(["run", write_yaml(tmp_path / "bad.yaml", bad)])
    err = json.loads(capsys.readouterr().err)
    assert code == 2 and err["error"] == "ConfigurationError" and "radix" in err["message"]


def test_cli_sweep(tmp_path, capsys):
    doc = {"template": base_doc(), "axes": {"policy.t_pdt_ns": [0, "inf"]}}
    path = write_yaml(tmp_path / "s.yaml", doc)
    assert cli.main(["sweep", path, "-o", str(tmp_path / "sw"),
                     "--axis", "power.sleep_profile=[fast_wake]"]) == 0
    assert json.loads(capsys.readouterr().out)["runs"] == 2
    doc["axes"]["policy.t_pdt_ns"] = [-1]
    path = write_yaml(tmp_path / "s2.yaml", doc)
    assert cli.main(["sweep", path, "-o", str(tmp_path / "sw2")]) == 1


def test_cli_trace_tools(tmp_path, capsys):
    trace = str(tmp_path / "t.trace")
    assert cli.main(["gen-traffic", "--kind", "allreduce_like", "--ranks", "4", "--iterations",
                     "2", "-o", trace]) == 0
    assert cli.main(["trace-check", trace]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info == {"ranks": 4, "messages": 16, "bytes": 16 * 4096, "steps": 32 + 4 * 2}
    assert cli.main(["trace-check", trace, "--nodes", "2"]) == 2
    (tmp_path / "bad.trace").write_text("vsim-trace v1 2\n1 r 0\n")
    assert cli.main(["trace-check", str(tmp_path / "bad.trace")]) == 2
    assert "unmatched receive" in capsys.readouterr().err


def test_cli_topo_dump(tmp_path):
    out = tmp_path / "topo.json"
    assert cli.main(["topo-dump", "--groups", "5", "--nodes-per-group", "4",
                     "--switches-per-group", "4", "--radix", "4", "-o", str(out)]) == 0
    d = json.loads(out.read_text())
    assert len(d["switches"]) == 20 and len(d["links"]) == 50
