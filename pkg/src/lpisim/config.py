"""Experiment configuration: nested dataclasses loaded from YAML.

Durations in the file are nanoseconds (``*_ns`` keys); ``t_pdt_ns`` also
accepts ``inf`` (or null) for a threshold that never expires.
"""
from __future__ import annotations

import copy
import dataclasses
import math
import os
from dataclasses import dataclass, field, fields
from typing import Any, Optional

import yaml

from .des import NS
from .energy import PowerParams
from .fabric import FabricParams
from .link_power import DEEP_SLEEP, FAST_WAKE, LinkPowerProfile
from .policy import RETENTIONS, BoundConfig, HistogramConfig
from .topology import ConfigurationError, TopologyConfig
from .traffic import SyntheticPattern

POLICIES = ("always_on", "fixed_pdt", "perfbound", "perfbound_correct")


def ns_to_ps(v) -> int:
    return int(round(float(v) * NS))


@dataclass
class FabricSection:
    bandwidth_gbps: float = 400.0
    buffer_bytes: int = 64 * 1024
    injection_bytes: int = 64 * 1024
    traversal_ns: float = 100.0
    wire_local_ns: float = 10.0
    wire_global_ns: float = 50.0
    mtu: int = 4096

    def build(self) -> FabricParams:
        if self.mtu < 64:
            raise ConfigurationError("fabric.mtu: must be >= 64")
        if self.buffer_bytes < self.mtu or self.injection_bytes < self.mtu:
            raise ConfigurationError("fabric: buffers must hold at least one MTU packet")
        return FabricParams(int(round(self.bandwidth_gbps * 1e9)), self.buffer_bytes,
                            self.injection_bytes, ns_to_ps(self.traversal_ns),
                            ns_to_ps(self.wire_local_ns), ns_to_ps(self.wire_global_ns), self.mtu)


@dataclass
class StateSection:
    power_w: float
    t_w_ns: float
    t_s_ns: float


@dataclass
class PowerSection:
    sleep_profile: str = "deep_sleep"
    switch_chassis_w: float = 250.0
    node_min_w: float = 800.0
    node_max_w: float = 1200.0
    port_wake_w: float = 24.0
    fast_wake: StateSection = field(default_factory=lambda: StateSection(9.6, 375, 200))
    deep_sleep: StateSection = field(default_factory=lambda: StateSection(2.4, 4480, 2000))

    def params(self) -> PowerParams:
        return PowerParams(self.switch_chassis_w, self.node_min_w, self.node_max_w, self.port_wake_w)

    def profile(self) -> LinkPowerProfile:
        if self.sleep_profile not in ("fast_wake", "deep_sleep"):
            raise ConfigurationError(
                f"power.sleep_profile: expected fast_wake or deep_sleep, got {self.sleep_profile!r}")
        st = getattr(self, self.sleep_profile)
        if not 0 <= st.power_w <= self.port_wake_w:
            raise ConfigurationError(f"power.{self.sleep_profile}.power_w must be within [0, Wake]")
        return LinkPowerProfile(self.sleep_profile, st.power_w, ns_to_ps(st.t_w_ns),
                                ns_to_ps(st.t_s_ns))


@dataclass
class PolicySection:
    kind: str = "always_on"
    t_pdt_ns: Any = None
    bound: float = 0.01
    recalc_ns: float = 10_000_000
    retention: str = "self_clearing"
    hist_n: int = 250
    ttl_ns: float = 1e9
    w_bin_ns: float = 1000
    max_bin_ns: float = 1e9
    n_r: int = 32
    max_t_pdt_ns: float = 1e6
    initial_t_pdt_ns: float = 0
    reject_retry: str = "rearm"

    def tpdt_ps(self) -> Optional[int]:
        v = self.t_pdt_ns
        if v is None or (isinstance(v, str) and v.lower() in ("inf", "infinity", "never")):
            return None
        v = float(v)
        if math.isinf(v):
            return None
        if v < 0:
            raise ConfigurationError("policy.t_pdt_ns: must be non-negative")
        return ns_to_ps(v)

    def check(self) -> None:
        if self.kind not in POLICIES:
            raise ConfigurationError(f"policy.kind: expected one of {POLICIES}, got {self.kind!r}")
        if self.retention not in RETENTIONS:
            raise ConfigurationError(f"policy.retention: expected one of {RETENTIONS}")
        if self.reject_retry not in ("rearm", "wait"):
            raise ConfigurationError("policy.reject_retry: expected rearm or wait")
        if self.kind in ("perfbound", "perfbound_correct"):
            if not 0 < self.bound < 1:
                raise ConfigurationError("policy.bound: must lie in (0, 1)")
            if self.recalc_ns <= 0:
                raise ConfigurationError("policy.recalc_ns: must be positive")
        if self.kind == "fixed_pdt":
            self.tpdt_ps()

    def hist_config(self) -> HistogramConfig:
        return HistogramConfig(ns_to_ps(self.w_bin_ns), ns_to_ps(self.max_bin_ns), self.retention,
                               self.hist_n, ns_to_ps(self.ttl_ns))

    def bound_config(self, t_w: int) -> BoundConfig:
        return BoundConfig(self.bound, ns_to_ps(self.recalc_ns), t_w)

    def describe(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "fixed_pdt":
            d["t_pdt_ps"] = self.tpdt_ps()
        elif self.kind != "always_on":
            d.update(bound=self.bound, recalc_ps=ns_to_ps(self.recalc_ns),
                     retention=self.retention, hist_n=self.hist_n,
                     w_bin_ps=ns_to_ps(self.w_bin_ns), max_bin_ps=ns_to_ps(self.max_bin_ns),
                     initial_t_pdt_ps=ns_to_ps(self.initial_t_pdt_ns),
                     max_t_pdt_ps=ns_to_ps(self.max_t_pdt_ns))
            if self.kind == "perfbound_correct":
                d["n_r"] = self.n_r
        d["reject_retry"] = self.reject_retry
        return d


@dataclass
class TrafficSection:
    trace: Optional[str] = None
    pattern: Optional[SyntheticPattern] = None
    mapping: Optional[list] = None


@dataclass
class MetricsSection:
    sampling_ns: float = 100_000
    inactivity_ports: Any = "auto"  # "auto" | "none" | list of port ids
    tpdt_log: bool = False


@dataclass
class ExperimentConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    fabric: FabricSection = field(default_factory=FabricSection)
    power: PowerSection = field(default_factory=PowerSection)
    policy: PolicySection = field(default_factory=PolicySection)
    traffic: TrafficSection = field(default_factory=TrafficSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)
    seed: int = 1
    output: Optional[str] = None
    max_events: int = 10**10

    def validate(self) -> "ExperimentConfig":
        try:
            self.topology.validate()
        except ConfigurationError as e:
            raise ConfigurationError(f"topology: {e}") from None
        self.fabric.build()
        self.power.profile()
        try:
            self.power.params()
        except ValueError as e:
            raise ConfigurationError(f"power: {e}") from None
        self.policy.check()
        if self.traffic.trace is None and self.traffic.pattern is None:
            raise ConfigurationError("traffic: give either trace or pattern")
        if self.traffic.trace is not None and self.traffic.pattern is not None:
            raise ConfigurationError("traffic: trace and pattern are mutually exclusive")
        if self.traffic.pattern is not None:
            try:
                self.traffic.pattern.validate()
            except ValueError as e:
                raise ConfigurationError(f"traffic.pattern: {e}") from None
        if self.metrics.sampling_ns <= 0:
            raise ConfigurationError("metrics.sampling_ns: must be positive")
        return self

    def to_dict(self) -> dict:
        return _to_plain(self)

    def copy(self) -> "ExperimentConfig":
        return copy.deepcopy(self)


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(x) for x in obj]
    return obj


_NESTED = {
    (ExperimentConfig, "topology"): TopologyConfig,
    (ExperimentConfig, "fabric"): FabricSection,
    (ExperimentConfig, "power"): PowerSection,
    (ExperimentConfig, "policy"): PolicySection,
    (ExperimentConfig, "traffic"): TrafficSection,
    (ExperimentConfig, "metrics"): MetricsSection,
    (PowerSection, "fast_wake"): StateSection,
    (PowerSection, "deep_sleep"): StateSection,
    (TrafficSection, "pattern"): SyntheticPattern,
}


def _from_plain(cls, data, path: str):
    if data is None:
        return None
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path or 'config'}: expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        where = f"{path}.{key}" if path else key
        if key not in known:
            raise ConfigurationError(f"{where}: unknown field")
        sub = _NESTED.get((cls, key))
        kwargs[key] = _from_plain(sub, value, where) if sub else value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"{path or 'config'}: {e}") from None


def from_dict(data: dict) -> ExperimentConfig:
    cfg = _from_plain(ExperimentConfig, data or {}, "")
    return cfg.validate()


def resolve_paths(data: dict, base_dir: str) -> dict:
    """Make a relative ``traffic.trace`` relative to ``base_dir``."""
    tr = data.get("traffic") if isinstance(data, dict) else None
    if isinstance(tr, dict) and isinstance(tr.get("trace"), str) and not os.path.isabs(tr["trace"]):
        tr["trace"] = os.path.normpath(os.path.join(base_dir, tr["trace"]))
    return data


def load(path: str, overrides: Optional[list[str]] = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    for ov in overrides or []:
        apply_override(data, ov)
    resolve_paths(data, os.path.dirname(os.path.abspath(path)))
    return from_dict(data)


def set_path(data: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    cur = data
    for k in keys[:-1]:
        nxt = cur.get(k)
        if nxt is None:
            nxt = cur[k] = {}
        cur = nxt
    cur[keys[-1]] = value


def apply_override(data: dict, expr: str) -> None:
    """``key.path=value`` with the value parsed as YAML."""
    if "=" not in expr:
        raise ConfigurationError(f"override {expr!r}: expected key=value")
    key, raw = expr.split("=", 1)
    set_path(data, key.strip(), yaml.safe_load(raw))
