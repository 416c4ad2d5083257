"""Trace programs: parsing, synthetic generation and replay.

Trace format (UTF-8, one step per line, ``#`` starts a comment)::

    vsim-trace v1 <nranks>
    <rank> c <ns>            compute for <ns> nanoseconds
    <rank> s <dst> <bytes>   send a message
    <rank> r <src>           block until the next message from <src> arrives
    <rank> u <percent>       CPU usage applied to later compute steps (default 100)

Steps of one rank run in file order. Sends and receives are matched FIFO per
ordered (src, dst) channel.
"""
from __future__ import annotations

import io
import random
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, TextIO, Union

from .des import NS, SimulationError

HEADER = "vsim-trace"
VERSION = "v1"


class TraceError(ValueError):
    pass


@dataclass
class TraceProgram:
    nranks: int
    steps: list[list[tuple]] = field(default_factory=list)

    def __post_init__(self):
        if not self.steps:
            self.steps = [[] for _ in range(self.nranks)]

    def compute(self, rank: int, ns: int) -> None:
        self.steps[rank].append(("c", int(ns)))

    def send(self, rank: int, dst: int, nbytes: int) -> None:
        self.steps[rank].append(("s", dst, int(nbytes)))

    def recv(self, rank: int, src: int) -> None:
        self.steps[rank].append(("r", src))

    def usage(self, rank: int, percent: int) -> None:
        self.steps[rank].append(("u", int(percent)))

    def n_messages(self) -> int:
        return sum(1 for st in self.steps for s in st if s[0] == "s")

    def validate(self) -> "TraceProgram":
        sends: Counter = Counter()
        recvs: Counter = Counter()
        for r, steps in enumerate(self.steps):
            for st in steps:
                op = st[0]
                if op == "s":
                    if not 0 <= st[1] < self.nranks:
                        raise TraceError(f"rank {r}: send destination {st[1]} out of range")
                    if st[2] <= 0:
                        raise TraceError(f"rank {r}: message size must be positive")
                    sends[(r, st[1])] += 1
                elif op == "r":
                    if not 0 <= st[1] < self.nranks:
                        raise TraceError(f"rank {r}: receive source {st[1]} out of range")
                    recvs[(st[1], r)] += 1
                elif op == "c":
                    if st[1] < 0:
                        raise TraceError(f"rank {r}: negative compute duration")
                elif op == "u":
                    if not 0 <= st[1] <= 100:
                        raise TraceError(f"rank {r}: usage must be within 0..100")
        for ch in sorted(set(sends) | set(recvs)):
            if recvs[ch] > sends[ch]:
                raise TraceError(f"unmatched receive on channel {ch[0]}->{ch[1]} "
                                 f"({recvs[ch]} receives, {sends[ch]} sends)")
            if sends[ch] > recvs[ch]:
                raise TraceError(f"unmatched send on channel {ch[0]}->{ch[1]} "
                                 f"({sends[ch]} sends, {recvs[ch]} receives)")
        return self

    def dumps(self) -> str:
        out = io.StringIO()
        write_trace(self, out)
        return out.getvalue()


def _int(tok: str, lineno: int, what: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise TraceError(f"line {lineno}: {what} must be an integer, got {tok!r}") from None


def parse_trace(stream: Union[str, TextIO, Iterable[str]]) -> TraceProgram:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    prog: Optional[TraceProgram] = None
    for lineno, raw in enumerate(stream, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if prog is None:
            if len(toks) != 3 or toks[0] != HEADER:
                raise TraceError(f"line {lineno}: missing header '{HEADER} {VERSION} <nranks>'")
            if toks[1] != VERSION:
                raise TraceError(f"line {lineno}: unsupported trace version {toks[1]!r}")
            n = _int(toks[2], lineno, "rank count")
            if n < 1:
                raise TraceError(f"line {lineno}: rank count must be >= 1")
            prog = TraceProgram(n)
            continue
        if len(toks) < 2:
            raise TraceError(f"line {lineno}: syntax error: {line!r}")
        rank = _int(toks[0], lineno, "rank")
        if not 0 <= rank < prog.nranks:
            raise TraceError(f"line {lineno}: rank {rank} out of range")
        op, args = toks[1], toks[2:]
        arity = {"c": 1, "s": 2, "r": 1, "u": 1}
        if op not in arity:
            raise TraceError(f"line {lineno}: unknown step {op!r}")
        if len(args) != arity[op]:
            raise TraceError(f"line {lineno}: step {op!r} takes {arity[op]} argument(s)")
        vals = [_int(a, lineno, "argument") for a in args]
        if op in "sr" and not 0 <= vals[0] < prog.nranks:
            raise TraceError(f"line {lineno}: rank {vals[0]} out of range")
        if op == "s" and vals[1] <= 0:
            raise TraceError(f"line {lineno}: message size must be positive")
        if op == "c" and vals[0] < 0:
            raise TraceError(f"line {lineno}: negative compute duration")
        prog.steps[rank].append((op, *vals))
    if prog is None:
        raise TraceError("missing header")
    return prog.validate()


def write_trace(prog: TraceProgram, fh: TextIO) -> None:
    fh.write(f"{HEADER} {VERSION} {prog.nranks}\n")
    for r, steps in enumerate(prog.steps):
        for st in steps:
            fh.write(" ".join(str(x) for x in (r, *st)) + "\n")


# -- synthetic patterns -----------------------------------------------------------

PATTERNS = ("on_off_burst", "allreduce_like", "uniform_random")


@dataclass(frozen=True)
class SyntheticPattern:
    kind: str = "on_off_burst"
    ranks: int = 4
    iterations: int = 10
    message_bytes: int = 4096
    burst_len: int = 4  # messages per burst (on_off_burst) / per rank (uniform_random)
    gap_ns: int = 50_000
    gap_jitter_ns: int = 0
    compute_ns: int = 0
    seed: int = 1

    def validate(self) -> None:
        if self.kind not in PATTERNS:
            raise ValueError(f"unknown pattern {self.kind!r}; expected one of {PATTERNS}")
        if self.ranks < 2:
            raise ValueError("synthetic patterns need at least 2 ranks")
        if self.iterations < 1 or self.message_bytes < 1 or self.burst_len < 1:
            raise ValueError("iterations, message_bytes and burst_len must be >= 1")
        if self.gap_ns < 0 or self.gap_jitter_ns < 0 or self.compute_ns < 0:
            raise ValueError("durations must be non-negative")
        if self.gap_jitter_ns > self.gap_ns:
            raise ValueError("gap_jitter_ns must not exceed gap_ns")
        if self.kind == "allreduce_like" and self.ranks & (self.ranks - 1):
            raise ValueError("allreduce_like needs a power-of-two rank count")


def generate(pattern: SyntheticPattern, topology=None) -> TraceProgram:
    pattern.validate()
    if topology is not None and pattern.ranks > topology.n_nodes:
        raise ValueError(f"{pattern.ranks} ranks exceed {topology.n_nodes} nodes")
    rng = random.Random(pattern.seed)
    n = pattern.ranks
    prog = TraceProgram(n)

    def gap() -> int:
        j = pattern.gap_jitter_ns
        return pattern.gap_ns + (rng.randint(-j, j) if j else 0)

    for _ in range(pattern.iterations):
        if pattern.kind == "on_off_burst":
            for r in range(n):
                for _ in range(pattern.burst_len):
                    prog.send(r, (r + 1) % n, pattern.message_bytes)
                for _ in range(pattern.burst_len):
                    prog.recv(r, (r - 1) % n)
            # one shared gap keeps the ranks' bursts aligned
            g = gap()
            for r in range(n):
                prog.compute(r, g)
        elif pattern.kind == "allreduce_like":
            if pattern.compute_ns:
                for r in range(n):
                    prog.compute(r, pattern.compute_ns)
            k = 1
            while k < n:
                for r in range(n):
                    prog.send(r, r ^ k, pattern.message_bytes)
                    prog.recv(r, r ^ k)
                k <<= 1
            g = gap()
            if g:
                for r in range(n):
                    prog.compute(r, g)
        else:  # uniform_random
            incoming: list[list[int]] = [[] for _ in range(n)]
            for r in range(n):
                if pattern.compute_ns:
                    prog.compute(r, pattern.compute_ns)
                for _ in range(pattern.burst_len):
                    d = rng.randrange(n - 1)
                    d = d + 1 if d >= r else d
                    prog.send(r, d, pattern.message_bytes)
                    incoming[d].append(r)
            for r in range(n):
                for s in incoming[r]:
                    prog.recv(r, s)
            g = gap()
            if g:
                for r in range(n):
                    prog.compute(r, g)
    return prog.validate()


# -- replay ---------------------------------------------------------------------

@dataclass
class Message:
    id: int
    src: int
    dst: int
    nbytes: int
    n_packets: int
    sent_at: int
    delivered: int = 0
    complete_at: Optional[int] = None


class Rank:
    __slots__ = ("id", "node", "steps", "pc", "state", "usage", "pending", "pending_msg",
                 "wait", "busy_since", "done_at")

    def __init__(self, rid: int, node: int, steps: list[tuple]):
        self.id = rid
        self.node = node
        self.steps = steps
        self.pc = 0
        self.state = "ready"
        self.usage = 100
        self.pending: deque[int] = deque()
        self.pending_msg: Optional[Message] = None
        self.wait: Optional[tuple[int, int]] = None
        self.busy_since: Optional[int] = None
        self.done_at: Optional[int] = None


class TrafficEngine:
    """Drives rank programs over a :class:`~lpisim.fabric.Network`."""

    def __init__(self, sim, network, program: TraceProgram, mapping: Optional[list[int]] = None,
                 mtu: int = 4096):
        self.sim = sim
        self.net = network
        self.program = program
        n_nodes = network.topo.n_nodes
        if program.nranks > n_nodes:
            raise SimulationError(f"{program.nranks} ranks exceed {n_nodes} nodes")
        mapping = list(range(program.nranks)) if mapping is None else list(mapping)
        if len(mapping) != program.nranks or len(set(mapping)) != len(mapping) or \
                any(not 0 <= m < n_nodes for m in mapping):
            raise SimulationError("rank mapping must be an injective list of node ids")
        self.mapping = mapping
        self.rank_of_node = {node: r for r, node in enumerate(mapping)}
        self.ranks = [Rank(r, mapping[r], program.steps[r]) for r in range(program.nranks)]
        self.mtu = mtu
        self.messages: list[Message] = []
        self.channels: dict[tuple[int, int], list[int]] = {}
        self.recv_next: Counter = Counter()
        self.node_busy = [0] * n_nodes  # integral of usage percent x ps
        self.unfinished = program.nranks
        self.makespan: Optional[int] = None
        self.on_finished = None
        self.packets = []
        network.on_deliver = self._on_deliver
        network.on_injection_space = self._on_space

    def start(self) -> None:
        for r in self.ranks:
            self.sim.schedule(0, "trace-step", self.advance, r, entity=r.id)
        if not self.ranks:
            self._finish()

    def _finish(self) -> None:
        self.makespan = self.sim.now
        if self.on_finished is not None:
            self.on_finished()

    def _done(self, rank: Rank) -> None:
        rank.state = "done"
        rank.done_at = self.sim.now
        self.unfinished -= 1
        if self.unfinished == 0:
            self._finish()

    def advance(self, rank: Rank) -> None:
        """Run the rank until it blocks or completes."""
        sim = self.sim
        if rank.state == "compute":
            dt = sim.now - rank.busy_since
            self.node_busy[rank.node] += rank.usage * dt
            rank.busy_since = None
            rank.state = "ready"
        while rank.state == "ready":
            if rank.pc >= len(rank.steps):
                self._done(rank)
                return
            st = rank.steps[rank.pc]
            rank.pc += 1
            op = st[0]
            if op == "c":
                if st[1] == 0:
                    continue
                rank.state = "compute"
                rank.busy_since = sim.now
                sim.schedule_in(st[1] * NS, "trace-step", self.advance, rank, entity=rank.id)
                return
            if op == "u":
                rank.usage = st[1]
            elif op == "s":
                self._start_send(rank, st[1], st[2])
            elif op == "r":
                ch = (st[1], rank.id)
                k = self.recv_next[ch]
                msgs = self.channels.get(ch, [])
                if k < len(msgs) and self.messages[msgs[k]].complete_at is not None:
                    self.recv_next[ch] += 1
                else:
                    rank.state = "recv"
                    rank.wait = (ch, k)
                    return

    def _start_send(self, rank: Rank, dst: int, nbytes: int) -> None:
        mid = len(self.messages)
        q, rem = divmod(nbytes, self.mtu)
        sizes = [self.mtu] * q + ([rem] if rem else [])
        msg = Message(mid, rank.id, dst, nbytes, len(sizes), self.sim.now)
        self.messages.append(msg)
        self.channels.setdefault((rank.id, dst), []).append(mid)
        if dst == rank.id:
            msg.delivered = msg.n_packets
            msg.complete_at = self.sim.now
            return
        rank.pending.extend(sizes)
        rank.pending_msg = msg
        self._push(rank)
        if rank.pending:
            rank.state = "send"

    def _push(self, rank: Rank) -> None:
        net = self.net
        msg = rank.pending_msg
        dst_node = self.mapping[msg.dst]
        while rank.pending:
            size = rank.pending[0]
            if net.injection_room(rank.node) < max(size, 64):
                return
            rank.pending.popleft()
            pkt = net.new_packet(rank.node, dst_node, size, msg.id)
            self.packets.append(pkt)
            net.inject(pkt)

    def _on_space(self, node: int) -> None:
        r = self.rank_of_node.get(node)
        if r is None:
            return
        rank = self.ranks[r]
        if rank.state == "send":
            self._push(rank)
            if not rank.pending:
                rank.state = "ready"
                self.sim.schedule(self.sim.now, "trace-step", self.advance, rank, entity=rank.id)

    def _on_deliver(self, pkt) -> None:
        msg = self.messages[pkt.message_id]
        msg.delivered += 1
        if msg.delivered < msg.n_packets:
            return
        msg.complete_at = self.sim.now
        rank = self.ranks[msg.dst]
        if rank.state == "recv":
            ch, k = rank.wait
            if ch == (msg.src, msg.dst) and self.channels[ch][k] == msg.id:
                self.recv_next[ch] += 1
                rank.wait = None
                rank.state = "ready"
                self.sim.schedule(self.sim.now, "trace-step", self.advance, rank, entity=rank.id)

    def blocked_ranks(self) -> list[int]:
        return [r.id for r in self.ranks if r.state in ("recv", "send")]
