"""Overlay topologies: generators, degree statistics, and graph corpuses.

Four generator families are supported: uniform random graphs with an exact
edge budget, preferential attachment, ring-lattice rewiring (small world),
and k-regular pairing. Every generator is deterministic in its seed and
rejects disconnected candidates, regenerating from a derived seed (all
dissemination experiments assume full reachability).

Corpuses are fixed collections of independently generated graphs sharing one
generator spec; they serve as matched testbeds so different protocols can be
compared under identical conditions.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter, deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping

import numpy as np
import scipy.sparse
import scipy.sparse.csgraph

from .rng import TAG_TOPOLOGY, Stream, derive

logger = logging.getLogger(__name__)

#: Give up after this many disconnected candidates.
MAX_CONNECTIVITY_ATTEMPTS = 200_000

#: Full restarts of the k-regular pairing before reporting failure.
MAX_PAIRING_RESTARTS = 1000


class ParameterError(ValueError):
    """Generator parameters violate a precondition."""


class GenerationError(RuntimeError):
    """A generator failed to produce a valid graph within its retry budget."""


class DisconnectedGraphError(ValueError):
    """An operation that requires a connected graph got a disconnected one."""


@dataclass(frozen=True)
class OverlayGraph:
    """Immutable undirected simple graph over nodes 0..node_count-1."""

    node_count: int
    edges: tuple[tuple[int, int], ...]  # canonical: u < v, ascending pairs

    def __post_init__(self):
        seen = set()
        for u, v in self.edges:
            if u == v:
                raise ValueError(f"self-loop at node {u}")
            if not (0 <= u < self.node_count and 0 <= v < self.node_count):
                raise ValueError(f"edge ({u},{v}) out of range")
            if u > v:
                raise ValueError(f"edge ({u},{v}) not canonical (need u < v)")
            if (u, v) in seen:
                raise ValueError(f"duplicate edge ({u},{v})")
            seen.add((u, v))

    @classmethod
    def from_edges(cls, node_count: int, edges) -> "OverlayGraph":
        canonical = sorted((min(u, v), max(u, v)) for u, v in edges)
        return cls(node_count, tuple(canonical))

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @cached_property
    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        adj: list[list[int]] = [[] for _ in range(self.node_count)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return tuple(tuple(sorted(a)) for a in adj)

    def degree(self, node: int) -> int:
        return len(self.adjacency[node])

    @cached_property
    def degrees(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.adjacency)

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """(indptr, indices) arrays for the simulation kernel. Read-only."""
        indptr = np.zeros(self.node_count + 1, dtype=np.int64)
        for v, neigh in enumerate(self.adjacency):
            indptr[v + 1] = indptr[v] + len(neigh)
        indices = np.empty(indptr[-1], dtype=np.int32)
        for v, neigh in enumerate(self.adjacency):
            indices[indptr[v]:indptr[v + 1]] = neigh
        indptr.flags.writeable = False
        indices.flags.writeable = False
        return indptr, indices


@dataclass(frozen=True)
class DegreeDistribution:
    """Degree probabilities p_i with first and second moments."""

    probabilities: Mapping[int, float]
    mean_degree: float
    second_moment: float

    @classmethod
    def from_probabilities(cls, probs: Mapping[int, float]) -> "DegreeDistribution":
        total = 0.0
        for deg, p in probs.items():
            if deg < 0 or int(deg) != deg:
                raise ValueError(f"degree {deg} is not a nonnegative integer")
            if not -1e-12 <= p <= 1.0 + 1e-12:
                raise ValueError(f"probability {p} for degree {deg} out of [0,1]")
            total += p
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {total}, not 1")
        mean = sum(d * p for d, p in probs.items())
        second = sum(d * d * p for d, p in probs.items())
        return cls(dict(probs), mean, second)


@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters for one generator family.

    kind is one of "er", "ba", "ws", "kregular"; only the parameters of the
    chosen family may be set.
    """

    kind: str
    node_count: int
    edge_count: int | None = None           # er
    edges_per_node: int | None = None       # ba
    neighbors_each_side: int | None = None  # ws
    rewire_prob: float | None = None        # ws
    k: int | None = None                    # kregular

    def __post_init__(self):
        if self.kind not in ("er", "ba", "ws", "kregular"):
            raise ParameterError(f"unknown generator kind {self.kind!r}")
        if self.node_count < 1:
            raise ParameterError("node_count must be positive")
        required = {
            "er": ("edge_count",),
            "ba": ("edges_per_node",),
            "ws": ("neighbors_each_side", "rewire_prob"),
            "kregular": ("k",),
        }[self.kind]
        for name in required:
            if getattr(self, name) is None:
                raise ParameterError(f"{self.kind} generator needs {name}")

    def generate(self, seed: int) -> OverlayGraph:
        if self.kind == "er":
            return generate_er(self.node_count, self.edge_count, seed)
        if self.kind == "ba":
            return generate_ba(self.node_count, self.edges_per_node, seed)
        if self.kind == "ws":
            return generate_ws(self.node_count, self.neighbors_each_side,
                               self.rewire_prob, seed)
        return generate_kregular(self.node_count, self.k, seed)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "node_count": self.node_count}
        for name in ("edge_count", "edges_per_node", "neighbors_each_side",
                     "rewire_prob", "k"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorSpec":
        return cls(**data)

    def label(self) -> str:
        d = self.to_dict()
        params = ",".join(f"{k}={v}" for k, v in d.items() if k != "kind")
        return f"{self.kind}({params})"


@dataclass(frozen=True)
class Corpus:
    """Ordered collection of graphs sharing one generator spec."""

    generator_spec: GeneratorSpec
    graphs: tuple[OverlayGraph, ...]
    seeds: tuple[int, ...]
    diameters: tuple[int, ...]
    max_diameter: int = field(default=0)

    def __post_init__(self):
        if len(self.graphs) != len(self.seeds) or len(self.graphs) != len(self.diameters):
            raise ValueError("graphs, seeds and diameters must align")
        for g in self.graphs:
            if g.node_count != self.generator_spec.node_count:
                raise ValueError("corpus member node_count mismatch")
        if self.diameters and self.max_diameter != max(self.diameters):
            raise ValueError("max_diameter does not match member diameters")

    def __len__(self) -> int:
        return len(self.graphs)


# ---------------------------------------------------------------------------
# connectivity helpers

def _connected_adj(node_count: int, adj: list[list[int]]) -> bool:
    if node_count == 0:
        return True
    seen = bytearray(node_count)
    queue = deque([0])
    seen[0] = 1
    reached = 1
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if not seen[w]:
                seen[w] = 1
                reached += 1
                queue.append(w)
    return reached == node_count


def _edges_to_adj(node_count: int, edges) -> list[list[int]]:
    adj: list[list[int]] = [[] for _ in range(node_count)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    return adj


def is_connected(g: OverlayGraph) -> bool:
    return _connected_adj(g.node_count, [list(a) for a in g.adjacency])


def _finish(kind: str, node_count: int, attempt_fn, seed: int) -> OverlayGraph:
    """Run a generator attempt function until it yields a connected graph.

    Each attempt draws from a fresh substream derived from (seed, attempt),
    so results are deterministic in the seed alone.
    """
    rejected = 0
    for attempt in range(MAX_CONNECTIVITY_ATTEMPTS):
        stream = Stream(derive(seed, TAG_TOPOLOGY, attempt))
        edges = attempt_fn(stream)
        if edges is None:
            rejected += 1
            continue
        adj = _edges_to_adj(node_count, edges)
        if _connected_adj(node_count, adj):
            if rejected:
                logger.debug("%s(seed=%d): rejected %d disconnected candidates",
                             kind, seed, rejected)
            return OverlayGraph.from_edges(node_count, edges)
        rejected += 1
    raise GenerationError(
        f"{kind}: no connected graph in {MAX_CONNECTIVITY_ATTEMPTS} attempts "
        f"(seed={seed}, last rejection count {rejected})")


# ---------------------------------------------------------------------------
# generators

def generate_er(node_count: int, edge_count: int, seed: int) -> OverlayGraph:
    """Uniform random graph with exactly ``edge_count`` distinct edges."""
    max_edges = node_count * (node_count - 1) // 2
    if edge_count > max_edges:
        raise ParameterError(
            f"edge_count {edge_count} exceeds maximum {max_edges} for "
            f"{node_count} nodes")
    if edge_count < 0:
        raise ParameterError("edge_count must be nonnegative")
    if node_count > 1 and edge_count < node_count - 1:
        raise ParameterError(
            f"edge_count {edge_count} below spanning-tree minimum "
            f"{node_count - 1}; graph cannot be connected")
    if node_count == 1:
        return OverlayGraph(1, ())

    def attempt(stream: Stream):
        # Draw endpoint pairs in vectorized batches; keep the first
        # edge_count distinct edges in draw order (uniform w/o replacement).
        # The `% node_count` mapping carries a modulo bias of order
        # node_count / 2**64, far below anything observable at this scale.
        keys_seen: dict[int, None] = {}
        batch = max(64, edge_count + edge_count // 4 + 32)
        while len(keys_seen) < edge_count:
            raw = stream.u64_array(2 * batch)
            a = (raw[0::2] % np.uint64(node_count)).astype(np.int64)
            b = (raw[1::2] % np.uint64(node_count)).astype(np.int64)
            lo = np.minimum(a, b)
            hi = np.maximum(a, b)
            valid = lo != hi
            keys = lo[valid] * node_count + hi[valid]
            for k in keys.tolist():
                if k not in keys_seen:
                    keys_seen[k] = None
                    if len(keys_seen) == edge_count:
                        break
        picked = np.fromiter(keys_seen.keys(), dtype=np.int64, count=edge_count)
        degrees = np.bincount(picked // node_count, minlength=node_count) + \
            np.bincount(picked % node_count, minlength=node_count)
        if (degrees == 0).any():
            return None  # isolated node, cannot be connected
        return [(int(k) // node_count, int(k) % node_count) for k in picked]

    return _finish("er", node_count, attempt, seed)


def generate_ba(node_count: int, edges_per_node: int, seed: int) -> OverlayGraph:
    """Preferential attachment starting from a clique seed.

    The seed network is a clique on (edges_per_node + 1) nodes so that every
    early attachment target has nonzero degree. Each arriving node attaches
    ``edges_per_node`` distinct edges, resampling duplicate targets, which
    leaves the total edge count slightly below node_count * edges_per_node.
    """
    m = edges_per_node
    if m < 1:
        raise ParameterError("edges_per_node must be >= 1")
    if node_count <= m:
        raise ParameterError(
            f"node_count {node_count} must exceed edges_per_node {m}")

    def attempt(stream: Stream):
        edges: list[tuple[int, int]] = []
        repeated: list[int] = []  # one entry per edge endpoint
        seed_size = min(m + 1, node_count)
        for u in range(seed_size):
            for v in range(u + 1, seed_size):
                edges.append((u, v))
                repeated.append(u)
                repeated.append(v)
        for new in range(seed_size, node_count):
            targets: list[int] = []
            while len(targets) < m:
                t = repeated[stream.below(len(repeated))]
                if t not in targets:
                    targets.append(t)
            for t in targets:
                edges.append((t, new))
                repeated.append(t)
                repeated.append(new)
        return edges

    return _finish("ba", node_count, attempt, seed)


def generate_ws(node_count: int, neighbors_each_side: int, rewire_prob: float,
                seed: int) -> OverlayGraph:
    """Ring lattice with independent edge rewiring.

    Each lattice edge (u, u+offset) is rewired with probability
    ``rewire_prob``: the far endpoint moves to a target drawn uniformly among
    nodes that are neither u nor current neighbors of u. If no valid target
    exists (only possible in near-complete graphs) the edge is discarded.
    """
    k = neighbors_each_side
    if not 0.0 <= rewire_prob <= 1.0:
        raise ParameterError("rewire_prob must lie in [0, 1]")
    if k < 1:
        raise ParameterError("neighbors_each_side must be >= 1")
    if 2 * k >= node_count:
        raise ParameterError(
            f"lattice degree {2 * k} must be below node_count {node_count}")

    def attempt(stream: Stream):
        adj: list[set[int]] = [set() for _ in range(node_count)]
        for u in range(node_count):
            for off in range(1, k + 1):
                v = (u + off) % node_count
                adj[u].add(v)
                adj[v].add(u)
        for u in range(node_count):
            for off in range(1, k + 1):
                v = (u + off) % node_count
                if stream.uniform() >= rewire_prob:
                    continue
                if len(adj[u]) >= node_count - 1:
                    adj[u].discard(v)
                    adj[v].discard(u)
                    continue
                w = stream.below(node_count)
                tries = 0
                while w == u or w in adj[u]:
                    w = stream.below(node_count)
                    tries += 1
                    if tries > 1000:  # deterministic fallback, effectively unreachable
                        candidates = [c for c in range(node_count)
                                      if c != u and c not in adj[u]]
                        w = candidates[stream.below(len(candidates))]
                        break
                adj[u].discard(v)
                adj[v].discard(u)
                adj[u].add(w)
                adj[w].add(u)
        return [(u, v) for u in range(node_count) for v in adj[u] if u < v]

    return _finish("ws", node_count, attempt, seed)


def generate_kregular(node_count: int, k: int, seed: int) -> OverlayGraph:
    """Simple graph where every node has degree exactly k (pairing model)."""
    if k >= node_count:
        raise ParameterError(f"k {k} must be below node_count {node_count}")
    if k < 1:
        raise ParameterError("k must be >= 1")
    if (k * node_count) % 2 != 0:
        raise ParameterError(f"k*node_count = {k * node_count} must be even")

    def pairing(stream: Stream):
        # Shuffle-and-pair with retry of colliding stubs; restart when a
        # pass makes no progress. Bounded restarts per the generation
        # contract.
        for _ in range(MAX_PAIRING_RESTARTS):
            stubs = [v for v in range(node_count) for _ in range(k)]
            edges: set[tuple[int, int]] = set()
            stuck = False
            while stubs:
                stream.shuffle(stubs)
                leftover: list[int] = []
                for i in range(0, len(stubs), 2):
                    u, v = stubs[i], stubs[i + 1]
                    if u > v:
                        u, v = v, u
                    if u == v or (u, v) in edges:
                        leftover.append(stubs[i])
                        leftover.append(stubs[i + 1])
                    else:
                        edges.add((u, v))
                if len(leftover) == len(stubs):
                    stuck = True
                    break
                stubs = leftover
            if not stuck:
                return list(edges)
        raise GenerationError(
            f"kregular(n={node_count}, k={k}): pairing failed after "
            f"{MAX_PAIRING_RESTARTS} restarts")

    return _finish("kregular", node_count, pairing, seed)


# ---------------------------------------------------------------------------
# inspection

def hop_distances(g: OverlayGraph) -> np.ndarray:
    """All-pairs shortest hop counts (float matrix, inf for unreachable)."""
    indptr, indices = g.csr
    matrix = scipy.sparse.csr_matrix(
        (np.ones(len(indices), dtype=np.int8), indices, indptr),
        shape=(g.node_count, g.node_count))
    return scipy.sparse.csgraph.shortest_path(matrix, method="D",
                                              unweighted=True, directed=False)


def diameter(g: OverlayGraph) -> int:
    """Maximum shortest-path hop count. Raises on disconnected input."""
    dist = hop_distances(g)
    if np.isinf(dist).any():
        raise DisconnectedGraphError("graph is disconnected; diameter undefined")
    return int(dist.max())


def empirical_degree_distribution(g: OverlayGraph) -> DegreeDistribution:
    counts = Counter(g.degrees)
    n = g.node_count
    return DegreeDistribution.from_probabilities(
        {deg: cnt / n for deg, cnt in sorted(counts.items())})


def build_corpus(spec: GeneratorSpec, count: int, base_seed: int) -> Corpus:
    """Generate ``count`` graphs with seeds base_seed..base_seed+count-1."""
    if count < 1:
        raise ParameterError("count must be >= 1")
    graphs = []
    diameters = []
    seeds = tuple(range(base_seed, base_seed + count))
    for index, s in enumerate(seeds):
        try:
            g = spec.generate(s)
        except (ParameterError, GenerationError) as exc:
            raise GenerationError(f"corpus member {index} (seed {s}): {exc}") from exc
        graphs.append(g)
        diameters.append(diameter(g))
    return Corpus(generator_spec=spec, graphs=tuple(graphs), seeds=seeds,
                  diameters=tuple(diameters), max_diameter=max(diameters))


def default_ttl(corpus: Corpus) -> int:
    """Rule-of-thumb TTL: 130% of the corpus max diameter, rounded up."""
    return math.ceil(1.3 * corpus.max_diameter)


# ---------------------------------------------------------------------------
# persistence

def write_graph_file(g: OverlayGraph, path: Path) -> None:
    """Canonical text format: `nodes <N>` then ascending `u v` lines."""
    lines = [f"nodes {g.node_count}\n"]
    lines.extend(f"{u} {v}\n" for u, v in g.edges)
    Path(path).write_text("".join(lines))


def read_graph_file(path: Path) -> OverlayGraph:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("nodes "):
        raise ValueError(f"{path}: missing 'nodes <N>' header")
    node_count = int(lines[0].split()[1])
    edges = []
    for line in lines[1:]:
        if not line.strip():
            continue
        u, v = line.split()
        edges.append((int(u), int(v)))
    return OverlayGraph(node_count, tuple(edges))


def save_corpus(corpus: Corpus, root: Path, name: str,
                overwrite: bool = False) -> Path:
    directory = Path(root) / name
    if directory.exists() and not overwrite:
        raise FileExistsError(f"corpus {name!r} already exists at {directory}")
    directory.mkdir(parents=True, exist_ok=True)
    for k, g in enumerate(corpus.graphs):
        write_graph_file(g, directory / f"graph-{k}.edges")
    meta = {
        "generator": corpus.generator_spec.to_dict(),
        "count": len(corpus.graphs),
        "seeds": list(corpus.seeds),
        "diameters": list(corpus.diameters),
        "max_diameter": corpus.max_diameter,
    }
    (directory / "meta").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return directory


def load_corpus(root: Path, name: str) -> Corpus:
    directory = Path(root) / name
    meta = json.loads((directory / "meta").read_text())
    spec = GeneratorSpec.from_dict(meta["generator"])
    graphs = tuple(read_graph_file(directory / f"graph-{k}.edges")
                   for k in range(meta["count"]))
    return Corpus(generator_spec=spec, graphs=graphs,
                  seeds=tuple(meta["seeds"]),
                  diameters=tuple(meta["diameters"]),
                  max_diameter=meta["max_diameter"])
