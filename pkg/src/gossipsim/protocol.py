"""Per-node dissemination behavior: generation, reception, forwarding.

The four schemes share one code shape: a holder of a fresh message selects
which neighbors receive a copy. Fixed-probability and the degree-dependent
functions decide per neighbor; probabilistic broadcast decides once for the
whole neighbor set (and always broadcasts a node's own fresh messages).

Randomness discipline (the compiled kernel mirrors it exactly, and the test
suite asserts trace equality): per-neighbor schemes consume one uniform per
eligible neighbor in adjacency order, whether or not the neighbor is
selected; probabilistic broadcast consumes a single uniform per forwarding
event, and none on a first transmission.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Sequence

from .rng import Stream
from .theory import GossipFunction, ProbabilisticBroadcast, Scheme


class SimulationIntegrityError(RuntimeError):
    """Internal consistency violated (e.g. a message arrived over a non-edge)."""


@dataclass(frozen=True)
class Message:
    """One disseminated copy. ``sender_degree`` is the piggybacked overlay
    degree of whoever forwarded this copy."""

    id: int
    origin: int
    created_at: int
    ttl_remaining: int
    hops_traversed: int
    sender_degree: int

    def __post_init__(self):
        if self.ttl_remaining < 0 or self.hops_traversed < 0:
            raise ValueError("ttl_remaining and hops_traversed must be >= 0")


class LruCache:
    """Fixed-capacity id cache with least-recently-used replacement."""

    __slots__ = ("capacity", "_entries")

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._entries: OrderedDict[int, None] = OrderedDict()

    def lookup(self, msg_id: int) -> bool:
        """True if present; a hit refreshes the entry to most-recently-used."""
        if msg_id in self._entries:
            self._entries.move_to_end(msg_id)
            return True
        return False

    def insert(self, msg_id: int) -> None:
        if msg_id in self._entries:
            self._entries.move_to_end(msg_id)
            return
        self._entries[msg_id] = None
        if len(self._entries) > self.capacity:
            self._entries.popitem(last=False)

    def __contains__(self, msg_id: int) -> bool:
        return msg_id in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def entries(self) -> list[int]:
        """Cached ids, most-recently-used first."""
        return list(reversed(self._entries))


@dataclass
class NodeState:
    """Mutable per-node state, confined to its owning simulation run."""

    node_id: int
    cache: LruCache
    neighbor_degrees: dict[int, int] = field(default_factory=dict)
    is_free_rider: bool = False
    next_generation_at: int = 0


@dataclass(frozen=True)
class ProtocolConfig:
    """Scheme choice plus message lifetime and behavioral switches.

    exclude_sender: suppress the pure echo back to the node a message just
    arrived from (the echo is always a cache hit there anyway); the origin's
    first send has no exclusion. Disable to follow the forwarding loop over
    all neighbors verbatim.

    count_expired_arrivals: a first arrival with spent TTL still counts as a
    reception and is cached (the node saw the payload). Disable for the
    strict reading where a spent-TTL arrival is ignored entirely.
    """

    variant: Scheme
    initial_ttl: int
    exclude_sender: bool = True
    count_expired_arrivals: bool = True

    def __post_init__(self):
        if self.initial_ttl < 1:
            raise ValueError("initial_ttl must be >= 1")
        if not isinstance(self.variant, (GossipFunction, ProbabilisticBroadcast)):
            raise TypeError("variant must be a GossipFunction or ProbabilisticBroadcast")


def scheme_kind(scheme: Scheme) -> str:
    """Short protocol name: fp, pb, ddf1 or ddf2."""
    if isinstance(scheme, ProbabilisticBroadcast):
        return "pb"
    return {"fixed": "fp", "ddf1": "ddf1", "ddf2": "ddf2"}[scheme.family]


def scheme_param(scheme: Scheme) -> float:
    return scheme.beta if isinstance(scheme, ProbabilisticBroadcast) else scheme.param


def scheme_with_param(scheme: Scheme, value: float) -> Scheme:
    if isinstance(scheme, ProbabilisticBroadcast):
        return ProbabilisticBroadcast(value)
    return GossipFunction(scheme.family, value)


def make_scheme(kind: str, value: float) -> Scheme:
    if kind == "fp":
        return GossipFunction("fixed", value)
    if kind == "pb":
        return ProbabilisticBroadcast(value)
    if kind in ("ddf1", "ddf2"):
        return GossipFunction(kind, value)
    raise ValueError(f"unknown protocol kind {kind!r}")


# ---------------------------------------------------------------------------
# forwarding rules

def forward_fp(neighbors: Sequence[int], gamma: float, exclude: int | None,
               rng: Stream) -> list[int]:
    """Independent selection of each eligible neighbor with probability gamma."""
    selected = []
    for w in neighbors:
        if w == exclude:
            continue
        if rng.uniform() < gamma:
            selected.append(w)
    return selected


def forward_pb(neighbors: Sequence[int], beta: float, first_transmission: bool,
               exclude: int | None, rng: Stream) -> list[int]:
    """All-or-nothing: a first transmission always goes to every neighbor,
    a relay goes to every eligible neighbor with probability beta."""
    if first_transmission:
        return list(neighbors)
    if rng.uniform() < beta:
        return [w for w in neighbors if w != exclude]
    return []


def forward_ddf(neighbors: Sequence[int], gossip_fn: GossipFunction,
                neighbor_degrees: dict[int, int], exclude: int | None,
                rng: Stream) -> list[int]:
    """Per-neighbor selection with probability gossip_fn(neighbor degree).

    Neighbors whose degree has not been learned yet are always selected
    (broadcast fallback). One uniform is consumed per eligible neighbor
    regardless of outcome.
    """
    selected = []
    for w in neighbors:
        if w == exclude:
            continue
        u = rng.uniform()
        degree = neighbor_degrees.get(w)
        prob = 1.0 if degree is None else gossip_fn(degree)
        if u < prob:
            selected.append(w)
    return selected


def _disseminate(variant: Scheme, neighbors: Sequence[int],
                 neighbor_degrees: dict[int, int], first_transmission: bool,
                 exclude: int | None, rng: Stream) -> list[int]:
    if isinstance(variant, ProbabilisticBroadcast):
        return forward_pb(neighbors, variant.beta, first_transmission, exclude, rng)
    if variant.family == "fixed":
        return forward_fp(neighbors, variant.param, exclude, rng)
    return forward_ddf(neighbors, variant, neighbor_degrees, exclude, rng)


# ---------------------------------------------------------------------------
# node callbacks

def on_generate(state: NodeState, neighbors: Sequence[int], now: int,
                cfg: ProtocolConfig, msg_id: int,
                rng: Stream) -> tuple[Message, list[tuple[int, Message]]]:
    """Create and disseminate a fresh message at its origin.

    The new id is cached before sending; outgoing copies keep the full TTL
    (the origin's send does not decrement) and carry one traversed hop. The
    caller advances the node's generation schedule.
    """
    if not neighbors:
        raise SimulationIntegrityError(f"node {state.node_id} has no neighbors")
    msg = Message(id=msg_id, origin=state.node_id, created_at=now,
                  ttl_remaining=cfg.initial_ttl, hops_traversed=0,
                  sender_degree=len(neighbors))
    state.cache.insert(msg.id)
    targets = _disseminate(cfg.variant, neighbors, state.neighbor_degrees,
                           first_transmission=True, exclude=None, rng=rng)
    copy = replace(msg, hops_traversed=1)
    return msg, [(w, copy) for w in targets]


def on_receive(state: NodeState, msg: Message, sender: int,
               neighbors: Sequence[int], cfg: ProtocolConfig,
               rng: Stream) -> tuple[bool, list[tuple[int, Message]]]:
    """Handle one arriving copy.

    Returns (newly_received, forwards). ``newly_received`` is True when the
    id was absent from the cache and the arrival counts as a reception; the
    engine keeps the per-(message, node) first-delivery accounting, since a
    small cache may evict an id that later returns.
    """
    if sender not in neighbors:
        raise SimulationIntegrityError(
            f"message {msg.id} arrived at {state.node_id} from non-neighbor {sender}")
    state.neighbor_degrees[sender] = msg.sender_degree
    if state.cache.lookup(msg.id):
        return False, []
    if msg.ttl_remaining == 0:
        if not cfg.count_expired_arrivals:
            return False, []
        state.cache.insert(msg.id)
        return True, []
    state.cache.insert(msg.id)
    if state.is_free_rider and msg.origin != state.node_id:
        return True, []
    exclude = sender if cfg.exclude_sender else None
    targets = _disseminate(cfg.variant, neighbors, state.neighbor_degrees,
                           first_transmission=False, exclude=exclude, rng=rng)
    copy = replace(msg, ttl_remaining=msg.ttl_remaining - 1,
                   hops_traversed=msg.hops_traversed + 1,
                   sender_degree=len(neighbors))
    return True, [(w, copy) for w in targets]


__all__ = [
    "Message", "LruCache", "NodeState", "ProtocolConfig",
    "SimulationIntegrityError", "Scheme", "GossipFunction",
    "ProbabilisticBroadcast", "scheme_kind", "scheme_param",
    "scheme_with_param", "make_scheme", "forward_fp", "forward_pb",
    "forward_ddf", "on_generate", "on_receive",
]
