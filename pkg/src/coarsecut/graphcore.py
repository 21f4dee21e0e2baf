"""Finite graphs, shortest-path metrics, measures and graph-family generators.

Vertex ids ``0..n-1`` double as the enumeration order of the vertex set, so
"least subscript" always means "least id".
"""

from __future__ import annotations

import heapq
import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

FAMILIES = (
    "path",
    "cycle",
    "grid2d",
    "random_tree",
    "series_parallel",
    "hypercube",
    "random_regular",
)

# excluded-minor order attached to minor-free families
MINOR_ORDER = {
    "path": 3,
    "random_tree": 3,
    "cycle": 4,
    "series_parallel": 4,
    "grid2d": 5,
}

MAX_REGULAR_RETRIES = 1000


class GraphError(ValueError):
    """Invalid graph, metric or measure input."""


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph on vertices ``0..n-1``."""

    n: int
    edges: tuple[tuple[int, int], ...]
    meta: dict = field(default_factory=dict, compare=False, hash=False, repr=False)

    def __post_init__(self):
        if self.n < 1:
            raise GraphError("graph needs at least one vertex")
        canon = []
        seen = set()
        for u, v in self.edges:
            u, v = int(u), int(v)
            if u == v:
                raise GraphError(f"loop at vertex {u}")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise GraphError(f"edge ({u}, {v}) out of range for n={self.n}")
            e = (u, v) if u < v else (v, u)
            if e in seen:
                raise GraphError(f"multi-edge {e}")
            seen.add(e)
            canon.append(e)
        object.__setattr__(self, "edges", tuple(sorted(canon)))

    @property
    def m(self) -> int:
        return len(self.edges)

    @cached_property
    def adj(self) -> tuple[tuple[int, ...], ...]:
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        return tuple(tuple(sorted(a)) for a in nbrs)

    @cached_property
    def csr(self) -> csr_matrix:
        if not self.edges:
            return csr_matrix((self.n, self.n), dtype=np.int8)
        e = np.asarray(self.edges, dtype=np.int64)
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        data = np.ones(len(rows), dtype=np.int8)
        return csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def degree(self, v: int) -> int:
        return len(self.adj[v])

    def is_connected(self) -> bool:
        return all(d >= 0 for d in bfs_distances(self, 0))

    def induced(self, vertices: Iterable[int]) -> tuple["Graph", list[int]]:
        """Induced subgraph, relabelled in increasing id order.

        Returns the subgraph and the list mapping new ids to old ids.
        """
        keep = sorted(set(vertices))
        index = {v: i for i, v in enumerate(keep)}
        edges = [(index[u], index[v]) for u, v in self.edges if u in index and v in index]
        return Graph(max(len(keep), 1), tuple(edges)), keep


@dataclass(frozen=True)
class MetricSpace:
    """Finite metric given by an integer distance matrix (unit edge lengths)."""

    dist: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.dist)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise GraphError("distance matrix must be square")
        d = d.astype(np.int64, copy=True)
        d.setflags(write=False)
        object.__setattr__(self, "dist", d)

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    @property
    def points(self) -> range:
        return range(self.n)

    @cached_property
    def diameter(self) -> int:
        return int(self.dist.max()) if self.n else 0

    def set_diameter(self, a: Iterable[int]) -> int:
        idx = np.fromiter(a, dtype=np.int64)
        if idx.size == 0:
            return 0
        return int(self.dist[np.ix_(idx, idx)].max())

    def set_distance(self, a: Iterable[int], b: Iterable[int]) -> int:
        ia = np.fromiter(a, dtype=np.int64)
        ib = np.fromiter(b, dtype=np.int64)
        if ia.size == 0 or ib.size == 0:
            raise GraphError("distance to an empty set is undefined")
        return int(self.dist[np.ix_(ia, ib)].min())

    def check(self, sample: int | None = None, seed: int = 0) -> bool:
        """Check metric axioms; triangle inequality exhaustively or on sampled triples."""
        d = self.dist
        if np.any(np.diag(d) != 0) or not np.array_equal(d, d.T):
            return False
        off = d[~np.eye(self.n, dtype=bool)]
        if off.size and off.min() < 1:
            return False
        if sample is None:
            for k in range(self.n):
                if np.any(d > d[:, [k]] + d[[k], :]):
                    return False
            return True
        rng = np.random.default_rng(seed)
        x, y, z = rng.integers(0, self.n, size=(3, sample))
        return bool(np.all(d[x, z] <= d[x, y] + d[y, z]))


@dataclass(frozen=True)
class VertexMeasure:
    weights: tuple[float, ...]

    def __post_init__(self):
        w = tuple(self.weights)
        if any(x < 0 for x in w):
            raise GraphError("vertex weights must be nonnegative")
        object.__setattr__(self, "weights", w)

    @property
    def total(self) -> float:
        return math.fsum(self.weights)

    @classmethod
    def uniform(cls, n: int) -> "VertexMeasure":
        return cls(tuple([1.0 / n] * n))

    def normalized(self) -> "VertexMeasure":
        t = self.total
        if t <= 0:
            raise GraphError("cannot normalize a zero measure")
        return VertexMeasure(tuple(w / t for w in self.weights))


@dataclass(frozen=True)
class PairMeasure:
    """Probability measure on ordered vertex pairs, stored sparsely."""

    pairs: tuple[tuple[int, int], ...]
    weights: tuple[float, ...]
    separation: int
    n: int

    def __post_init__(self):
        if len(self.pairs) != len(self.weights):
            raise GraphError("pairs and weights differ in length")
        if any(w <= 0 for w in self.weights):
            raise GraphError("pair weights must be positive")
        if abs(math.fsum(self.weights) - 1.0) > 1e-12:
            raise GraphError("pair weights must sum to 1")

    def validate(self, m: MetricSpace) -> None:
        for u, v in self.pairs:
            if m.dist[u, v] < self.separation:
                raise GraphError(f"pair ({u}, {v}) closer than separation {self.separation}")

    def marginal(self) -> VertexMeasure:
        """First-coordinate marginal: nu(A) = mu(A x M)."""
        acc = [0.0] * self.n
        for (u, _), w in zip(self.pairs, self.weights):
            acc[u] += w
        return VertexMeasure(tuple(acc))


@dataclass(frozen=True)
class FamilySpec:
    family: str
    n: int | None = None
    rows: int | None = None
    cols: int | None = None
    dim: int | None = None
    degree: int | None = None
    seed: int = 0

    @property
    def minor_order(self) -> int | None:
        return MINOR_ORDER.get(self.family)


def bfs_distances(g: Graph, source: int) -> list[int]:
    """Unweighted single-source distances; -1 marks unreachable vertices."""
    if not 0 <= source < g.n:
        raise GraphError(f"source {source} out of range")
    dist = [-1] * g.n
    dist[source] = 0
    queue = deque([source])
    adj = g.adj
    while queue:
        u = queue.popleft()
        du = dist[u] + 1
        for w in adj[u]:
            if dist[w] < 0:
                dist[w] = du
                queue.append(w)
    return dist


def metric_of(g: Graph) -> MetricSpace:
    d = shortest_path(g.csr, method="D", directed=False, unweighted=True)
    if np.isinf(d).any():
        raise GraphError("graph is disconnected")
    return MetricSpace(d.astype(np.int64))


def proximity_graph(m: MetricSpace, s: int, points: Sequence[int] | None = None) -> Graph:
    """Join points at metric distance at most ``s``.

    With ``points`` given, the graph lives on those points, relabelled
    ``0..len(points)-1`` in the given order.
    """
    if s < 1:
        raise GraphError("proximity scale s must be >= 1")
    idx = np.arange(m.n) if points is None else np.asarray(points, dtype=np.int64)
    sub = m.dist[np.ix_(idx, idx)]
    iu, iv = np.nonzero(np.triu((sub > 0) & (sub <= s), k=1))
    return Graph(len(idx), tuple(zip(iu.tolist(), iv.tolist())))


def vertex_boundary(g: Graph, a: Iterable[int]) -> set[int]:
    a = set(a)
    out = set()
    for u in a:
        out.update(g.adj[u])
    return out - a


def far_pair_measure(m: MetricSpace, n: int) -> PairMeasure:
    iu, iv = np.nonzero(m.dist >= n)
    if iu.size == 0:
        raise GraphError(f"no pair at distance >= {n}")
    pairs = tuple(zip(iu.tolist(), iv.tolist()))
    w = 1.0 / len(pairs)
    return PairMeasure(pairs, tuple([w] * len(pairs)), n, m.n)


def measure_restrict(nu: VertexMeasure, a: Iterable[int]) -> float:
    return math.fsum(nu.weights[v] for v in set(a))


# ---------------------------------------------------------------- generators


def generate(spec: FamilySpec) -> Graph:
    """Build a connected instance of the requested family, deterministic in ``spec.seed``."""
    fam = spec.family
    rng = np.random.default_rng(spec.seed)
    if fam == "path":
        n = _need(spec.n, "n", 1)
        g = Graph(n, tuple((i, i + 1) for i in range(n - 1)))
    elif fam == "cycle":
        n = _need(spec.n, "n", 3)
        g = Graph(n, tuple((i, (i + 1) % n) for i in range(n)))
    elif fam == "grid2d":
        rows, cols = _need(spec.rows, "rows", 1), _need(spec.cols, "cols", 1)
        g = Graph(rows * cols, tuple(_grid_edges(rows, cols)))
    elif fam == "random_tree":
        g = _random_tree(_need(spec.n, "n", 1), rng)
    elif fam == "series_parallel":
        g = _series_parallel(_need(spec.n, "n", 2), rng)
    elif fam == "hypercube":
        dim = _need(spec.dim, "dim", 0)
        g = Graph(
            1 << dim,
            tuple((v, v | (1 << b)) for v in range(1 << dim) for b in range(dim) if not v >> b & 1),
        )
    elif fam == "random_regular":
        g = _random_regular(_need(spec.n, "n", 2), _need(spec.degree, "degree", 1), rng)
    else:
        raise GraphError(f"unknown family {fam!r}; expected one of {', '.join(FAMILIES)}")
    g.meta.update(family=fam, seed=spec.seed)
    if spec.minor_order is not None:
        g.meta["minor_order"] = spec.minor_order
    return g


def _need(value, name, lo):
    if value is None or int(value) < lo:
        raise GraphError(f"parameter {name} must be >= {lo}, got {value}")
    return int(value)


def _grid_edges(rows, cols):
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                yield v, v + 1
            if r + 1 < rows:
                yield v, v + cols


def _random_tree(n, rng) -> Graph:
    # uniform labelled tree from a random Pruefer sequence
    if n <= 2:
        return Graph(n, ((0, 1),) if n == 2 else ())
    seq = rng.integers(0, n, size=n - 2).tolist()
    degree = [1] * n
    for x in seq:
        degree[x] += 1
    edges = []
    leaves = [v for v in range(n) if degree[v] == 1]
    heapq.heapify(leaves)
    for x in seq:
        leaf = heapq.heappop(leaves)
        edges.append((leaf, x))
        degree[x] -= 1
        if degree[x] == 1:
            heapq.heappush(leaves, x)
    edges.append((heapq.heappop(leaves), heapq.heappop(leaves)))
    return Graph(n, tuple(edges))


def _series_parallel(n, rng) -> Graph:
    """Grow a 2-terminal series-parallel graph to ``n`` vertices.

    Each step either subdivides an edge (series) or adds a parallel path of
    length two between the ends of an existing edge. Both operations keep
    the graph simple and K4-minor-free.
    """
    edges = [(0, 1)]
    nv = 2
    while nv < n:
        i = int(rng.integers(len(edges)))
        u, v = edges[i]
        w = nv
        nv += 1
        if rng.random() < 0.5:
            edges[i] = (u, w)
            edges.append((w, v))
        else:
            edges.extend([(u, w), (w, v)])
    return Graph(n, tuple(edges))


def _random_regular(n, d, rng) -> Graph:
    """Pairing model with rejection of loops, multi-edges and disconnected outcomes."""
    if d >= n or (n * d) % 2:
        raise GraphError(f"no {d}-regular simple graph on {n} vertices")
    points = np.repeat(np.arange(n), d)
    for _ in range(MAX_REGULAR_RETRIES):
        perm = rng.permutation(points).reshape(-1, 2)
        u, v = perm[:, 0], perm[:, 1]
        if np.any(u == v):
            continue
        e = np.sort(perm, axis=1)
        if len(np.unique(e, axis=0)) != len(e):
            continue
        g = Graph(n, tuple(map(tuple, e.tolist())))
        if g.is_connected():
            return g
    raise GraphError(f"no connected simple {d}-regular graph after {MAX_REGULAR_RETRIES} tries")


def complete_graph(n: int) -> Graph:
    return Graph(n, tuple(itertools.combinations(range(n), 2)))


def star_graph(leaves: int) -> Graph:
    return Graph(leaves + 1, tuple((0, i) for i in range(1, leaves + 1)))
