"""Power-down threshold policies.

* ``FixedPDT``: a constant threshold for every port.
* ``PerfBound``: each port keeps a histogram of its idle periods and, every
  recalculation interval, picks the threshold that lets at most
  ``N = l * X / t_w`` idle periods outlast it, where ``l`` weights the
  degradation bound by the hop distances of the port's traffic.
* ``PerfBoundCorrect``: PerfBound plus a corrective factor computed from the
  recent miss rate and the geometric mean of miss ratios.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

from .des import MS, S, US
from .topology import HopDistanceTable

RETENTIONS = ("unbounded", "self_clearing", "circular", "ttl")


@dataclass(frozen=True)
class HistogramConfig:
    w_bin: int = 1 * US
    max_bin: int = 1 * S
    retention: str = "self_clearing"
    n: int = 250
    ttl: int = 1 * S  # only for retention="ttl"

    def __post_init__(self):
        if self.w_bin <= 0:
            raise ValueError("w_bin must be positive")
        if self.max_bin < self.w_bin:
            raise ValueError("max_bin must be at least one bin wide")
        if self.retention not in RETENTIONS:
            raise ValueError(f"retention must be one of {RETENTIONS}, got {self.retention!r}")
        if self.retention in ("self_clearing", "circular") and self.n < 1:
            raise ValueError("retention size N must be >= 1")

    @property
    def n_bins(self) -> int:
        return self.max_bin // self.w_bin


class InactivityHistogram:
    def __init__(self, config: HistogramConfig = HistogramConfig()):
        self.config = config
        self.counts: dict[int, int] = {}
        self.total = 0
        self.fifo: deque[int] = deque()
        self.cleared_at = 0

    def bin_index(self, duration: int) -> int:
        return min(duration // self.config.w_bin, self.config.n_bins - 1)

    def _add(self, b: int, k: int = 1) -> None:
        c = self.counts.get(b, 0) + k
        if c:
            self.counts[b] = c
        else:
            del self.counts[b]
        self.total += k

    def clear(self) -> None:
        self.counts.clear()
        self.fifo.clear()
        self.total = 0

    def record(self, duration: int, now: Optional[int] = None) -> None:
        if duration < 0:
            raise ValueError(f"negative inactivity period {duration}")
        cfg = self.config
        if cfg.retention == "ttl" and now is not None and now - self.cleared_at >= cfg.ttl:
            self.clear()
            self.cleared_at = now
        b = self.bin_index(duration)
        self._add(b)
        if cfg.retention == "self_clearing":
            if self.total >= cfg.n:
                self.clear()
        elif cfg.retention == "circular":
            self.fifo.append(b)
            if len(self.fifo) > cfg.n:
                self._add(self.fifo.popleft(), -1)

    def as_dict(self) -> dict[int, int]:
        return dict(sorted(self.counts.items()))


def record_inactivity(hist: InactivityHistogram, duration: int) -> InactivityHistogram:
    hist.record(duration)
    return hist


def compute_local_bound(table: Union[HopDistanceTable, Mapping[int, float]], bound: float,
                        diameter: Optional[int] = None) -> float:
    """Degradation bound weighted by the hop-count mix of the port's packets."""
    if isinstance(table, HopDistanceTable):
        props = table.proportions()
        diameter = table.diameter if diameter is None else diameter
    else:
        props = dict(table)
    if not props:
        if not diameter:
            raise ValueError("empty hop table needs a diameter for the fallback bound")
        return bound / diameter
    return bound * math.fsum(p / h for h, p in props.items())


def budget(bound_l: float, X: int, t_w: int) -> float:
    """Number of idle periods allowed to outlast the threshold in an interval X."""
    if X == 0:
        return 0.0
    return bound_l * X / t_w


def bin_center(index: int, w_bin: int) -> int:
    return (2 * index + 1) * w_bin // 2


def perfbound_tpdt(hist: Union[InactivityHistogram, Mapping[int, int]], N: float,
                   max_tpdt: int, w_bin: Optional[int] = None, initial: int = 0) -> int:
    """Scan bins from the highest down, accumulating counts; return the centre of
    the lowest bin whose running total is still <= N."""
    if isinstance(hist, InactivityHistogram):
        counts = hist.counts
        w_bin = hist.config.w_bin
    else:
        counts = hist
    if not counts:
        return initial
    acc = 0
    chosen = None
    for b in range(max(counts), -1, -1):
        acc += counts.get(b, 0)
        if acc > N:
            break
        chosen = b
    if chosen is None:
        return max_tpdt
    return bin_center(chosen, w_bin)


@dataclass
class CorrectionState:
    n_r: int = 32
    max_tpdt: int = 1 * MS
    bits: deque = field(default=None)
    ratios: deque = field(default_factory=deque)
    last_tpdt: Optional[int] = None

    def __post_init__(self):
        if self.n_r < 1:
            raise ValueError("n_R must be >= 1")
        if self.bits is None:
            self.bits = deque([False] * self.n_r)

    @property
    def misses(self) -> int:
        return len(self.ratios)

    @property
    def miss_fraction(self) -> float:
        return self.misses / self.n_r


def on_prediction_outcome(state: CorrectionState, miss: bool, idle_duration: int = 0,
                          last_tpdt: int = 0, ratio: Optional[float] = None) -> CorrectionState:
    if miss:
        if ratio is None:
            if last_tpdt <= 0:
                raise ValueError("a miss needs a positive t_PDT to form its ratio")
            ratio = idle_duration / last_tpdt
        if ratio < 1:
            raise ValueError(f"miss ratio {ratio} < 1: idle period did not outlast t_PDT")
    evicted = state.bits.popleft()
    state.bits.append(miss)
    if evicted:
        state.ratios.popleft()
    if miss:
        state.ratios.append(ratio)
    return state


def correction_factor(state: CorrectionState) -> float:
    if not state.ratios:
        return 0.0
    geo = math.exp(math.fsum(math.log(r) for r in state.ratios) / len(state.ratios))
    return state.miss_fraction * geo


def corrected_tpdt(base: int, cf: float, max_tpdt: int) -> int:
    if base < 0 or cf < 0:
        raise ValueError("base t_PDT and corrective factor must be non-negative")
    return min(int(round(base * (1.0 + cf))), max_tpdt)


def register_capacity(width_bits: int, resolution_s: float) -> float:
    """Longest interval (s) a ``width_bits`` unsigned timer register can encode."""
    return (2 ** width_bits) * resolution_s


def register_table(widths=(16, 32, 48, 64, 128),
                   resolutions=(1e-9, 1e-8, 1e-7, 1e-6)) -> dict[tuple[int, float], float]:
    return {(w, r): register_capacity(w, r) for w in widths for r in resolutions}


# -- per-port policy objects ------------------------------------------------------

class AlwaysOn:
    name = "always_on"
    tpdt = None

    def observe_hops(self, hops):
        pass

    def observe_idle(self, idle, miss, armed_tpdt, now):
        pass


class FixedPDT(AlwaysOn):
    name = "fixed_pdt"

    def __init__(self, tpdt: Optional[int]):
        if tpdt is not None and tpdt < 0:
            raise ValueError("t_PDT must be non-negative")
        self.tpdt = tpdt


@dataclass(frozen=True)
class BoundConfig:
    bound: float = 0.01
    X: int = 10 * MS
    t_w: int = 4480 * 1000

    def __post_init__(self):
        if not 0 < self.bound < 1:
            raise ValueError("bound must lie in (0, 1)")
        if self.X <= 0:
            raise ValueError("recalculation interval X must be positive")


class PerfBound(AlwaysOn):
    name = "perfbound"

    def __init__(self, hist_cfg: HistogramConfig, bound_cfg: BoundConfig, diameter: int,
                 max_tpdt: int = 1 * MS, initial_tpdt: int = 0,
                 correction: Optional[CorrectionState] = None, ratio_floor: Optional[int] = None):
        self.hist = InactivityHistogram(hist_cfg)
        self.bound_cfg = bound_cfg
        self.hops = HopDistanceTable(diameter)
        self.max_tpdt = max_tpdt
        self.tpdt = initial_tpdt
        self.initial = initial_tpdt
        self.correction = correction
        self.ratio_floor = hist_cfg.w_bin if ratio_floor is None else ratio_floor
        self.base_tpdt = initial_tpdt
        if correction is not None:
            self.name = "perfbound_correct"

    def observe_hops(self, hops):
        self.hops.record(hops)

    def observe_idle(self, idle, miss, armed_tpdt, now):
        self.hist.record(idle, now)
        if self.correction is None:
            return
        if miss:
            denom = armed_tpdt if armed_tpdt else self.tpdt
            denom = max(denom or 0, self.ratio_floor)
            on_prediction_outcome(self.correction, True, ratio=max(idle / denom, 1.0))
        else:
            on_prediction_outcome(self.correction, False)

    def local_bound(self) -> float:
        return compute_local_bound(self.hops, self.bound_cfg.bound)

    def recalc(self) -> int:
        cfg = self.bound_cfg
        N = budget(self.local_bound(), cfg.X, cfg.t_w)
        base = perfbound_tpdt(self.hist, N, self.max_tpdt, initial=self.initial)
        self.base_tpdt = base
        if self.correction is None:
            self.tpdt = base
        else:
            self.tpdt = corrected_tpdt(base, correction_factor(self.correction), self.max_tpdt)
            self.correction.last_tpdt = self.tpdt
        return self.tpdt
