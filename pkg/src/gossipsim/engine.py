"""Deterministic synchronous time-stepped simulation over one graph.

Copies sent at step t arrive at step t+1. Within a step every node first
processes its arrivals in (sender id, message id) order, then generates if
scheduled; generation stops for the last ``initial_ttl`` steps so every
message gets its full hop budget before the horizon. Arrivals produced by
the final step are delivered in one drain tick (their TTL is provably spent
by then), which keeps sends and deliveries in exact balance.

Two interchangeable backends exist: :func:`run` drives the compiled kernel,
:func:`run_reference` is a plain-Python loop built from
:mod:`gossipsim.protocol`. They produce bit-identical traces; the test suite
holds them together.
"""

from __future__ import annotations

import gzip
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _kernel
from .protocol import (LruCache, Message, NodeState, ProbabilisticBroadcast,
                       ProtocolConfig, SimulationIntegrityError, on_generate,
                       on_receive, scheme_kind)
from .rng import (TAG_FORWARD, TAG_FREE_RIDERS, TAG_GENERATION, TAG_ORIGIN,
                  Stream, derive)
from .topology import OverlayGraph, is_connected


@dataclass(frozen=True)
class SimulationConfig:
    """One run's full parameterization."""

    protocol: ProtocolConfig
    total_steps: int = 1000
    mean_generation_interval: float = 10.0
    cache_capacity: int = 256
    free_rider_fraction: float = 0.0
    seed: int = 0
    single_message: bool = False   # one seeded message at step 0, no schedules
    preload_degrees: bool = False  # start with neighbor degrees already known
    record_deliveries: bool = False

    def __post_init__(self):
        if self.total_steps <= self.protocol.initial_ttl:
            raise ValueError(
                "total_steps must exceed initial_ttl (the generation-free "
                "tail has to fit)")
        if self.cache_capacity < 1:
            raise ValueError("cache_capacity must be >= 1")
        if not 0.0 <= self.free_rider_fraction < 1.0:
            raise ValueError("free_rider_fraction must lie in [0, 1)")
        if self.mean_generation_interval <= 0:
            raise ValueError("mean_generation_interval must be positive")


@dataclass
class EventTrace:
    """Aggregated run trace plus optional per-delivery records.

    Aggregate arrays are indexed by message id. ``receiver_counts`` counts
    distinct non-origin nodes with a first-time delivery, ``first_hop_sum``
    accumulates their hop counts. Delivery record arrays are populated only
    when the run recorded deliveries.
    """

    node_count: int
    initial_ttl: int
    origins: np.ndarray
    created_at: np.ndarray
    receiver_counts: np.ndarray
    first_hop_sum: np.ndarray
    total_sends: int
    deliveries: dict[str, np.ndarray] | None = field(default=None)

    @property
    def message_count(self) -> int:
        return len(self.origins)

    def equals(self, other: "EventTrace") -> bool:
        if (self.node_count != other.node_count
                or self.initial_ttl != other.initial_ttl
                or self.total_sends != other.total_sends):
            return False
        for a, b in ((self.origins, other.origins),
                     (self.created_at, other.created_at),
                     (self.receiver_counts, other.receiver_counts),
                     (self.first_hop_sum, other.first_hop_sum)):
            if not np.array_equal(a, b):
                return False
        if (self.deliveries is None) != (other.deliveries is None):
            return False
        if self.deliveries is not None:
            for key in ("msg", "receiver", "hops", "step", "first"):
                if not np.array_equal(self.deliveries[key], other.deliveries[key]):
                    return False
        return True


def assign_free_riders(node_count: int, fraction: float, seed: int) -> frozenset[int]:
    """floor(fraction * node_count) distinct nodes, uniform, seed-determined."""
    if not 0.0 <= fraction < 1.0:
        raise ValueError("fraction must lie in [0, 1)")
    count = int(fraction * node_count)
    if count == 0:
        return frozenset()
    stream = Stream(derive(seed, TAG_FREE_RIDERS))
    return frozenset(stream.sample_range(node_count, count))


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def generation_schedule(stream: Stream, mean_interval: float, total_steps: int,
                        initial_ttl: int) -> list[int]:
    """Strictly increasing generation steps below total_steps - initial_ttl.

    The first entry is the rounded exponential draw itself (it may be 0);
    subsequent inter-arrivals are floored at one step. The draw that
    overshoots the horizon is consumed, then the schedule stops.
    """
    horizon = total_steps - initial_ttl
    times: list[int] = []
    t = _round_half_up(stream.exponential(mean_interval))
    while t < horizon:
        times.append(t)
        t += max(1, _round_half_up(stream.exponential(mean_interval)))
    return times


def _single_origin(node_count: int, seed: int) -> int:
    return Stream(derive(seed, TAG_ORIGIN)).below(node_count)


def _kernel_protocol(cfg: SimulationConfig, g: OverlayGraph):
    variant = cfg.protocol.variant
    if isinstance(variant, ProbabilisticBroadcast):
        return _kernel.KIND_PB, variant.beta, np.zeros(1, np.float64)
    if variant.family == "fixed":
        return _kernel.KIND_FP, variant.param, np.zeros(1, np.float64)
    max_degree = max(g.degrees) if g.node_count else 0
    table = np.array([variant(d) for d in range(max_degree + 1)], np.float64)
    return _kernel.KIND_DDF, 0.0, table


def run(g: OverlayGraph, cfg: SimulationConfig) -> EventTrace:
    """Execute one run on the compiled kernel."""
    if not is_connected(g):
        raise ValueError("simulation requires a connected graph")
    indptr, indices = g.csr
    kind, scalar, table = _kernel_protocol(cfg, g)
    riders = assign_free_riders(g.node_count, cfg.free_rider_fraction, cfg.seed)
    rider_flags = np.zeros(g.node_count, np.uint8)
    for v in riders:
        rider_flags[v] = 1
    origin = _single_origin(g.node_count, cfg.seed) if cfg.single_message else 0

    (origins, created, recv_count, hop_sum, total_sends,
     rec_msg, rec_rcv, rec_hops, rec_step, rec_first, status) = _kernel.run_kernel(
        indptr, indices, kind, float(scalar), table,
        cfg.protocol.initial_ttl, cfg.cache_capacity, cfg.total_steps,
        float(cfg.mean_generation_interval),
        1 if cfg.protocol.exclude_sender else 0,
        1 if cfg.protocol.count_expired_arrivals else 0,
        rider_flags,
        1 if cfg.preload_degrees else 0,
        1 if cfg.single_message else 0,
        origin,
        np.uint64(cfg.seed % (1 << 64)),
        1 if cfg.record_deliveries else 0,
        TAG_GENERATION, TAG_FORWARD)
    if status != _kernel.OK:
        raise SimulationIntegrityError(f"kernel reported integrity fault {status}")
    deliveries = None
    if cfg.record_deliveries:
        deliveries = {"msg": rec_msg, "receiver": rec_rcv, "hops": rec_hops,
                      "step": rec_step, "first": rec_first}
    return EventTrace(node_count=g.node_count,
                      initial_ttl=cfg.protocol.initial_ttl,
                      origins=origins, created_at=created,
                      receiver_counts=recv_count, first_hop_sum=hop_sum,
                      total_sends=int(total_sends), deliveries=deliveries)


def run_reference(g: OverlayGraph, cfg: SimulationConfig,
                  collect_send_log: bool = False) -> EventTrace:
    """Plain-Python twin of :func:`run`; slow, for tests and small studies.

    With ``collect_send_log`` the trace gains a ``send_log`` entry in
    ``deliveries`` holding (sender, receiver, msg) per send, which some
    behavioral tests inspect.
    """
    if not is_connected(g):
        raise ValueError("simulation requires a connected graph")
    n = g.node_count
    adjacency = g.adjacency
    proto = cfg.protocol
    ttl0 = proto.initial_ttl

    riders = assign_free_riders(n, cfg.free_rider_fraction, cfg.seed)
    states = []
    fwd_streams = []
    for v in range(n):
        st = NodeState(node_id=v, cache=LruCache(cfg.cache_capacity),
                       is_free_rider=v in riders)
        if cfg.preload_degrees:
            st.neighbor_degrees = {w: len(adjacency[w]) for w in adjacency[v]}
        states.append(st)
        fwd_streams.append(Stream(derive(cfg.seed, TAG_FORWARD, v)))

    schedules: list[list[int]] = [[] for _ in range(n)]
    if cfg.single_message:
        origin = _single_origin(n, cfg.seed)
        schedules[origin] = [0]
    else:
        for v in range(n):
            gen_stream = Stream(derive(cfg.seed, TAG_GENERATION, v))
            schedules[v] = generation_schedule(
                gen_stream, cfg.mean_generation_interval, cfg.total_steps, ttl0)
    schedule_pos = [0] * n

    origins: list[int] = []
    created: list[int] = []
    recv_count: list[int] = []
    hop_sum: list[int] = []
    received: list[set[int]] = []  # per message: nodes that saw it
    total_sends = 0
    rec = {"msg": [], "receiver": [], "hops": [], "step": [], "first": []}
    send_log: list[tuple[int, int, int]] = []

    # pending arrivals: (receiver, sender, msg_obj); sorted per step
    current: list[tuple[int, int, Message]] = []
    nxt: list[tuple[int, int, Message]] = []

    for t in range(cfg.total_steps + 1):
        i = 0
        for v in range(n):
            neighbors = adjacency[v]
            while i < len(current) and current[i][0] == v:
                _, sender, msg = current[i]
                i += 1
                if t == cfg.total_steps and msg.ttl_remaining > 0:
                    raise SimulationIntegrityError("live TTL in drain tick")
                newly, forwards = on_receive(states[v], msg, sender, neighbors,
                                             proto, fwd_streams[v])
                first = 0
                if newly and v not in received[msg.id]:
                    received[msg.id].add(v)
                    recv_count[msg.id] += 1
                    hop_sum[msg.id] += msg.hops_traversed
                    first = 1
                if cfg.record_deliveries:
                    rec["msg"].append(msg.id)
                    rec["receiver"].append(v)
                    rec["hops"].append(msg.hops_traversed)
                    rec["step"].append(t)
                    rec["first"].append(first)
                for w, copy in forwards:
                    nxt.append((w, v, copy))
                    if collect_send_log:
                        send_log.append((v, w, copy.id))
                total_sends += len(forwards)
            pos = schedule_pos[v]
            # schedule entries are < horizon by construction (and the single
            # message fires at step 0, also < horizon)
            if pos < len(schedules[v]) and schedules[v][pos] == t:
                schedule_pos[v] += 1
                msg_id = len(origins)
                msg, sends = on_generate(states[v], neighbors, t, proto,
                                         msg_id, fwd_streams[v])
                origins.append(v)
                created.append(t)
                recv_count.append(0)
                hop_sum.append(0)
                received.append({v})
                for w, copy in sends:
                    nxt.append((w, v, copy))
                    if collect_send_log:
                        send_log.append((v, w, copy.id))
                total_sends += len(sends)
        # (receiver, sender, msg id, send sequence) ordering for next step
        nxt_sorted = sorted(range(len(nxt)),
                            key=lambda j: (nxt[j][0], nxt[j][1], nxt[j][2].id, j))
        current = [nxt[j] for j in nxt_sorted]
        nxt = []

    deliveries = None
    if cfg.record_deliveries:
        deliveries = {k: np.array(vals, np.int64 if k == "msg" else
                                  (np.uint8 if k == "first" else np.int32))
                      for k, vals in rec.items()}
        if collect_send_log:
            deliveries["send_log"] = np.array(send_log, np.int64).reshape(-1, 3)
    return EventTrace(node_count=n, initial_ttl=ttl0,
                      origins=np.array(origins, np.int32),
                      created_at=np.array(created, np.int32),
                      receiver_counts=np.array(recv_count, np.int32),
                      first_hop_sum=np.array(hop_sum, np.int64),
                      total_sends=total_sends, deliveries=deliveries)


# ---------------------------------------------------------------------------
# trace dump

def write_trace(trace: EventTrace, path: Path, compress: bool = False) -> None:
    """Line format: `G <msgid> <origin> <step> <ttl>` for generations,
    `D <msgid> <receiver> <hops> <step> <first:0|1>` for deliveries."""
    if trace.deliveries is None:
        raise ValueError("trace has no delivery records; run with record_deliveries")
    lines = []
    for m in range(trace.message_count):
        lines.append(f"G {m} {trace.origins[m]} {trace.created_at[m]} "
                     f"{trace.initial_ttl}\n")
    d = trace.deliveries
    for j in range(len(d["msg"])):
        lines.append(f"D {d['msg'][j]} {d['receiver'][j]} {d['hops'][j]} "
                     f"{d['step'][j]} {d['first'][j]}\n")
    data = "".join(lines).encode()
    path = Path(path)
    if compress or str(path).endswith(".gz"):
        with gzip.open(path, "wb", mtime=0) as fh:
            fh.write(data)
    else:
        path.write_bytes(data)


def read_trace(path: Path) -> dict:
    """Parse a dump back into arrays (see :func:`write_trace` for fields)."""
    path = Path(path)
    opener = gzip.open if str(path).endswith(".gz") else open
    gens = {"msg": [], "origin": [], "step": [], "ttl": []}
    dels = {"msg": [], "receiver": [], "hops": [], "step": [], "first": []}
    with opener(path, "rt") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "G":
                gens["msg"].append(int(parts[1]))
                gens["origin"].append(int(parts[2]))
                gens["step"].append(int(parts[3]))
                gens["ttl"].append(int(parts[4]))
            elif parts[0] == "D":
                dels["msg"].append(int(parts[1]))
                dels["receiver"].append(int(parts[2]))
                dels["hops"].append(int(parts[3]))
                dels["step"].append(int(parts[4]))
                dels["first"].append(int(parts[5]))
            else:
                raise ValueError(f"unknown trace record {parts[0]!r}")
    return {"generations": {k: np.array(v, np.int64) for k, v in gens.items()},
            "deliveries": {k: np.array(v, np.int64) for k, v in dels.items()}}
