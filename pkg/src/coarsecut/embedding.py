"""Random-sign cut functions and the multi-scale embedding into L1.

For a decomposition with cut set ``C`` the function is

    f(u) = theta[leader(u)] * dist_G(u, C)

(zero on ``C``).  Stacking ``f`` over sampled ``(offsets, signs)`` gives one
L1 block per scale ``delta = 2**i``; blocks are weighted by ``(2/3)**i`` and
centred at a base vertex.

Empty cut sets: a sample that deletes nothing leaves one piece with a common
sign, so every coordinate is set to zero.  Any constant would give the same
pairwise distances; zero keeps padding estimates on the low side.
"""

from __future__ import annotations

import itertools
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .decomposition import Decomposition, kpr_decompose
from .graphcore import Graph, GraphError

log = logging.getLogger(__name__)

EXACT_LIMIT = 10**6


def cut_distances(g: Graph, cut) -> list[int]:
    """Multi-source BFS distance to ``cut`` in the whole graph; -1 everywhere if ``cut`` is empty."""
    dist = [-1] * g.n
    queue = deque()
    for v in cut:
        dist[v] = 0
        queue.append(v)
    adj = g.adj
    while queue:
        u = queue.popleft()
        du = dist[u] + 1
        for w in adj[u]:
            if dist[w] < 0:
                dist[w] = du
                queue.append(w)
    return dist


def eval_f(g: Graph, dec: Decomposition, theta: Mapping[int, int] | Sequence[int], u: int) -> int:
    """Value of the signed cut function at ``u``; ``theta`` maps leader id to a sign."""
    lead = dec.leader_of[u]
    if lead < 0:
        return 0
    cut = dec.cut
    if not cut:
        return 0
    return int(theta[lead]) * cut_distances(g, cut)[u]


def sign_disagreement(dec: Decomposition, u: int, v: int) -> Fraction:
    """Exact probability over uniform signs that sign f(u) != sign f(v) (signs in {-1, 0, 1})."""
    lu, lv = dec.leader_of[u], dec.leader_of[v]
    leaders = sorted({x for x in (lu, lv) if x >= 0})
    hits = 0
    total = 0
    for signs in itertools.product((-1, 1), repeat=len(leaders)):
        theta = dict(zip(leaders, signs))
        su = theta[lu] if lu >= 0 else 0
        sv = theta[lv] if lv >= 0 else 0
        hits += su != sv
        total += 1
    return Fraction(hits, total)


@dataclass(frozen=True)
class OmegaSample:
    offsets: tuple[int, ...]
    theta: dict[int, int]
    seed: int
    delta: int
    index: int


class _CutCache:
    """Per-offset-vector cache of (|f| magnitudes, leader index) for one graph and scale."""

    def __init__(
        self, g: Graph, delta: int, rounds: int, include_leader: bool = True, clamp: bool = False
    ):
        self.g, self.delta, self.rounds = g, delta, rounds
        self.include_leader = include_leader
        self.clamp = clamp
        self._store: dict[tuple[int, ...], tuple[np.ndarray, np.ndarray, Decomposition]] = {}

    def get(self, offsets: tuple[int, ...]):
        hit = self._store.get(offsets)
        if hit is None:
            dec = kpr_decompose(self.g, self.delta, self.rounds, offsets, self.include_leader)
            cut = dec.cut
            if cut:
                mag = np.asarray(cut_distances(self.g, cut), dtype=np.int64)
            else:
                mag = np.zeros(self.g.n, dtype=np.int64)
            if self.clamp:
                mag = np.minimum(mag, self.delta // 2)
            leader = np.asarray(dec.leader_of, dtype=np.int64)
            hit = (mag, leader, dec)
            self._store[offsets] = hit
        return hit


def _sample_rng(seed: int, delta: int, k: int) -> np.random.Generator:
    return np.random.default_rng([seed, delta, k])


def _draw(rng: np.random.Generator, n: int, delta: int, rounds: int):
    offsets = tuple(int(x) for x in rng.integers(1, delta + 1, size=rounds))
    signs = rng.integers(0, 2, size=n) * 2 - 1
    return offsets, signs


def sample_omega(
    g: Graph,
    delta: int,
    rounds: int,
    seed: int,
    count: int,
    include_leader: bool = True,
) -> list[tuple[OmegaSample, Decomposition]]:
    if count < 1:
        raise GraphError("count must be >= 1")
    cache = _CutCache(g, delta, rounds, include_leader)
    out = []
    for k in range(count):
        offsets, signs = _draw(_sample_rng(seed, delta, k), g.n, delta, rounds)
        _, _, dec = cache.get(offsets)
        theta = {c.leader: int(signs[c.leader]) for c in dec.components}
        out.append((OmegaSample(offsets, theta, seed, delta, k), dec))
    return out


@dataclass
class ScaleBlock:
    """Sampled values of the signed cut function, one row per vertex, one column per sample."""

    delta: int
    index: int
    values: np.ndarray
    offsets: np.ndarray
    weight: float

    @property
    def samples(self) -> int:
        return self.values.shape[1]

    def magnitude_violations(self) -> list[tuple[int, int, int]]:
        """Coordinates with |value| > delta/2 as (vertex, sample, value)."""
        bad = np.argwhere(2 * np.abs(self.values) > self.delta)
        return [(int(u), int(k), int(self.values[u, k])) for u, k in bad]

    def max_edge_jump(self, g: Graph) -> int:
        if not g.edges:
            return 0
        e = np.asarray(g.edges)
        return int(np.abs(self.values[e[:, 0]] - self.values[e[:, 1]]).max())


def embed_scale(
    g: Graph,
    delta: int,
    rounds: int,
    samples: int,
    seed: int,
    index: int | None = None,
    include_leader: bool = True,
    clamp: bool = False,
) -> ScaleBlock:
    """Sample ``samples`` columns of the signed cut function at one scale.

    ``clamp=True`` caps magnitudes at ``delta // 2``; the capped function is
    still 1-Lipschitz on every sample.
    """
    if samples < 1:
        raise GraphError("samples must be >= 1")
    if index is None:
        index = max(0, round(math.log2(delta)))
    cache = _CutCache(g, delta, rounds, include_leader, clamp)
    values = np.empty((g.n, samples), dtype=np.int64)
    offsets = np.empty((samples, rounds), dtype=np.int64)
    for k in range(samples):
        lam, signs = _draw(_sample_rng(seed, delta, k), g.n, delta, rounds)
        mag, leader, _ = cache.get(lam)
        values[:, k] = mag * signs[np.maximum(leader, 0)]
        offsets[k] = lam
    block = ScaleBlock(delta, index, values, offsets, (2.0 / 3.0) ** index)
    bad = block.magnitude_violations()
    if bad:
        log.warning(
            "delta=%d: %d coordinates exceed delta/2 (first: vertex %d sample %d value %d)",
            delta,
            len(bad),
            *bad[0],
        )
    return block


@dataclass
class L1Point:
    """Multi-scale embedding: raw blocks plus the base vertex used for centring."""

    blocks: list[ScaleBlock]
    base: int
    rounds: int
    seed: int
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.blocks[0].values.shape[0]

    @property
    def i_max(self) -> int:
        return max(b.index for b in self.blocks)

    def centred(self, block: ScaleBlock) -> np.ndarray:
        return block.values - block.values[self.base]

    def row(self, v: int) -> list[np.ndarray]:
        return [b.weight * self.centred(b)[v] for b in self.blocks]

    def block_distance(self, block: ScaleBlock, u: int, v: int) -> float:
        """Unweighted empirical L1 distance within one block."""
        return float(np.abs(block.values[u] - block.values[v]).sum()) / block.samples

    def distance_matrix(self) -> np.ndarray:
        total = np.zeros((self.n, self.n))
        for b in self.blocks:
            total += b.weight * block_distance_matrix(b)
        return total


def block_distance_matrix(block: ScaleBlock) -> np.ndarray:
    """All-pairs empirical L1 distances of one block (unweighted)."""
    x = block.values.astype(np.float64)
    return cdist(x, x, metric="cityblock") / block.samples


def default_i_max(diameter: int) -> int:
    return math.ceil(math.log2(max(diameter, 1))) + 1


def multiscale_embed(
    g: Graph,
    rounds: int,
    i_max: int,
    samples: int,
    seed: int,
    base: int = 0,
    include_leader: bool = True,
    clamp: bool = False,
) -> L1Point:
    if i_max < 1:
        raise GraphError("i_max must be >= 1")
    if not 0 <= base < g.n:
        raise GraphError(f"base vertex {base} out of range")
    blocks = [
        embed_scale(g, 2**i, rounds, samples, seed, i, include_leader, clamp)
        for i in range(1, i_max + 1)
    ]
    return L1Point(blocks, base, rounds, seed, {"clamp": clamp, "include_leader": include_leader})


def l1_distance(p: L1Point, u: int, v: int) -> float:
    return math.fsum(b.weight * p.block_distance(b, u, v) for b in p.blocks)


# ---------------------------------------------------------------- exact oracle


def _pair_term(a: int, b: int, u_cut: bool, v_cut: bool, same_leader: bool) -> float:
    if u_cut and v_cut:
        return 0.0
    if u_cut:
        return float(b)
    if v_cut:
        return float(a)
    if same_leader:
        return float(abs(a - b))
    return (abs(a - b) + abs(a + b)) / 2


def exact_pair_expectation(
    g: Graph, delta: int, rounds: int, u: int, v: int, include_leader: bool = True
) -> float:
    """E|F_u - F_v| over all offset vectors and all signs, by full enumeration."""
    if delta**rounds > EXACT_LIMIT:
        raise GraphError(f"delta**rounds = {delta**rounds} exceeds enumeration limit {EXACT_LIMIT}")
    if u == v:
        return 0.0
    cache = _CutCache(g, delta, rounds, include_leader)
    acc = []
    for lam in itertools.product(range(1, delta + 1), repeat=rounds):
        mag, leader, _ = cache.get(lam)
        a, b = int(mag[u]), int(mag[v])
        lu, lv = int(leader[u]), int(leader[v])
        acc.append(_pair_term(a, b, lu < 0, lv < 0, lu == lv))
    return math.fsum(acc) / len(acc)


def exact_block_distances(
    g: Graph, delta: int, rounds: int, include_leader: bool = True
) -> np.ndarray:
    """All-pairs version of :func:`exact_pair_expectation`."""
    if delta**rounds > EXACT_LIMIT:
        raise GraphError(f"delta**rounds = {delta**rounds} exceeds enumeration limit {EXACT_LIMIT}")
    cache = _CutCache(g, delta, rounds, include_leader)
    total = np.zeros((g.n, g.n))
    count = 0
    for lam in itertools.product(range(1, delta + 1), repeat=rounds):
        mag, leader, _ = cache.get(lam)
        a = mag[:, None].astype(float)
        b = mag[None, :].astype(float)
        alive = leader >= 0
        same = (leader[:, None] == leader[None, :]) & alive[:, None] & alive[None, :]
        total += np.where(same, np.abs(a - b), np.maximum(a, b))
        count += 1
    out = total / count
    np.fill_diagonal(out, 0.0)
    return out


# ---------------------------------------------------------------- padding


@dataclass(frozen=True)
class PaddingEstimate:
    delta: int
    rounds: int
    epsilon: float
    half_width: float
    samples: int
    vertex: int

    def to_json(self) -> dict:
        return {
            "delta": self.delta,
            "rounds": self.rounds,
            "epsilon": self.epsilon,
            "half_width": self.half_width,
            "samples": self.samples,
            "vertex": self.vertex,
        }


def padding_from_block(block: ScaleBlock, rounds: int) -> PaddingEstimate:
    absval = np.abs(block.values).astype(np.float64)
    means = absval.mean(axis=1)
    u = int(np.argmin(means))
    sd = absval[u].std(ddof=1) if block.samples > 1 else 0.0
    return PaddingEstimate(
        block.delta,
        rounds,
        float(means[u]) / block.delta,
        1.96 * float(sd) / math.sqrt(block.samples) / block.delta,
        block.samples,
        u,
    )


def estimate_padding(
    g: Graph, delta: int, rounds: int, samples: int, seed: int, include_leader: bool = True
) -> PaddingEstimate:
    """min_u E|F_u| / delta with a normal-approximation 95% half-width at the minimiser."""
    if g.n < 2:
        raise GraphError("padding estimate needs at least two vertices")
    return padding_from_block(embed_scale(g, delta, rounds, samples, seed, None, include_leader), rounds)
