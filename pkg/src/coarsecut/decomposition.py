"""Random cutting procedures for minor-free graphs.

Two variants share one record type:

* ``residue``: each round deletes, inside every current component, the
  vertices whose distance from the component leader is congruent to the
  round offset modulo ``delta``.  One offset per round, shared by all
  components of that round.
* ``annulus``: each round deletes, inside every current component, the
  annuli of width ``2s`` (with gaps ``t``) around the leader, choosing the
  shift per component so that the deleted measure is as small as possible.

Distances in round ``j > 1`` are always measured in the induced subgraph of
the component being cut.  Leaders are least vertex ids.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .graphcore import Graph, GraphError, VertexMeasure

RESIDUE = "residue"
ANNULUS = "annulus"


@dataclass(frozen=True)
class Component:
    leader: int
    vertices: tuple[int, ...]


@dataclass(frozen=True)
class Decomposition:
    n: int
    delta: int
    rounds: int
    variant: str
    # residue: one offset per round; annulus: per round, (leader, alpha) pairs
    offsets: tuple
    deleted: tuple[tuple[int, ...], ...]
    components: tuple[Component, ...]
    leader_of: tuple[int, ...]

    @property
    def cut(self) -> frozenset[int]:
        return frozenset(v for d in self.deleted for v in d)

    def to_json(self) -> dict:
        offsets = list(self.offsets)
        if self.variant == ANNULUS:
            offsets = [[list(p) for p in rnd] for rnd in self.offsets]
        return {
            "variant": self.variant,
            "delta": self.delta,
            "rounds": self.rounds,
            "offsets": offsets,
            "deleted": [list(d) for d in self.deleted],
            "components": [{"leader": c.leader, "vertices": list(c.vertices)} for c in self.components],
        }

    @classmethod
    def from_json(cls, data: dict, n: int | None = None) -> "Decomposition":
        comps = tuple(Component(c["leader"], tuple(c["vertices"])) for c in data["components"])
        deleted = tuple(tuple(d) for d in data["deleted"])
        if n is None:
            n = sum(len(d) for d in deleted) + sum(len(c.vertices) for c in comps)
        leader_of = [-1] * n
        for c in comps:
            for v in c.vertices:
                leader_of[v] = c.leader
        variant = data.get("variant", RESIDUE)
        offsets = data["offsets"]
        offsets = (
            tuple(tuple(tuple(p) for p in rnd) for rnd in offsets)
            if variant == ANNULUS
            else tuple(offsets)
        )
        return cls(n, data["delta"], data["rounds"], variant, offsets, deleted, comps, tuple(leader_of))

    def check_partition(self, g: Graph) -> bool:
        """Deleted sets and components partition V; components are connected and led by their minimum."""
        seen = [0] * g.n
        for d in self.deleted:
            for v in d:
                seen[v] += 1
        for c in self.components:
            if not c.vertices or c.leader != min(c.vertices):
                return False
            for v in c.vertices:
                seen[v] += 1
        if any(k != 1 for k in seen):
            return False
        survivors = [lead >= 0 for lead in self.leader_of]
        leaders = _label_components(g, survivors)
        return list(leaders) == list(self.leader_of)


# ---------------------------------------------------------------- internals


def _label_components(g: Graph, live: Sequence[bool]) -> list[int]:
    """Leader (least id) of each live vertex's component in the induced subgraph; -1 if dead."""
    adj = g.adj
    leader = [-1] * g.n
    for v in range(g.n):
        if not live[v] or leader[v] >= 0:
            continue
        leader[v] = v
        queue = deque([v])
        while queue:
            u = queue.popleft()
            for w in adj[u]:
                if live[w] and leader[w] < 0:
                    leader[w] = v
                    queue.append(w)
    return leader


def _leader_distances(g: Graph, leader: Sequence[int]) -> list[int]:
    """Distance of every live vertex to its own leader inside its component."""
    adj = g.adj
    dist = [-1] * g.n
    queue = deque()
    for v in range(g.n):
        if leader[v] == v:
            dist[v] = 0
            queue.append(v)
    while queue:
        u = queue.popleft()
        du = dist[u] + 1
        lu = leader[u]
        for w in adj[u]:
            if dist[w] < 0 and leader[w] == lu:
                dist[w] = du
                queue.append(w)
    return dist


def _components_of(leader: Sequence[int]) -> tuple[Component, ...]:
    groups: dict[int, list[int]] = {}
    for v, lead in enumerate(leader):
        if lead >= 0:
            groups.setdefault(lead, []).append(v)
    return tuple(Component(k, tuple(vs)) for k, vs in sorted(groups.items()))


def _as_live(g: Graph, live) -> list[bool]:
    if live is None:
        return [True] * g.n
    mask = [False] * g.n
    for v in live:
        mask[v] = True
    return mask


def _residue_step(g, leader, delta, offset, include_leader):
    dist = _leader_distances(g, leader)
    target = offset % delta
    deleted = [
        v
        for v in range(g.n)
        if dist[v] >= 0 and dist[v] % delta == target and (include_leader or dist[v] > 0)
    ]
    return deleted


# ---------------------------------------------------------------- residue variant


def _check_offset(delta: int, offset: int) -> None:
    if delta < 1:
        raise GraphError("delta must be >= 1")
    if not 1 <= offset <= delta:
        raise GraphError(f"offset {offset} outside [1, {delta}]")


def residue_round(
    g: Graph,
    live: Iterable[int] | None,
    delta: int,
    offset: int,
    include_leader: bool = True,
) -> tuple[set[int], tuple[Component, ...]]:
    """One cut round over the live vertex set.

    ``include_leader=False`` keeps distance-0 vertices even when
    ``offset == delta``.
    """
    _check_offset(delta, offset)
    mask = _as_live(g, live)
    leader = _label_components(g, mask)
    deleted = _residue_step(g, leader, delta, offset, include_leader)
    for v in deleted:
        mask[v] = False
    return set(deleted), _components_of(_label_components(g, mask))


def kpr_decompose(
    g: Graph,
    delta: int,
    rounds: int,
    offsets: Sequence[int],
    include_leader: bool = True,
) -> Decomposition:
    if rounds < 1:
        raise GraphError("rounds must be >= 1")
    offsets = tuple(int(x) for x in offsets)
    if len(offsets) != rounds:
        raise GraphError(f"expected {rounds} offsets, got {len(offsets)}")
    for x in offsets:
        _check_offset(delta, x)
    mask = [True] * g.n
    leader = _label_components(g, mask)
    deleted_rounds = []
    for x in offsets:
        deleted = _residue_step(g, leader, delta, x, include_leader)
        for v in deleted:
            mask[v] = False
        deleted_rounds.append(tuple(deleted))
        leader = _label_components(g, mask)
    return Decomposition(
        g.n, delta, rounds, RESIDUE, offsets, tuple(deleted_rounds), _components_of(leader), tuple(leader)
    )


def kpr_diameter_bound(delta: int, r: int) -> int:
    """Upper bound ``(r-1)(4(r+1)delta+1)`` on component diameters for K_r-minor-free graphs."""
    if r < 2:
        raise GraphError("excluded-minor order r must be >= 2")
    if delta < 1:
        raise GraphError("delta must be >= 1")
    return (r - 1) * (4 * (r + 1) * delta + 1)


def component_diameters(g: Graph, dec: Decomposition, induced: bool = True) -> list[int]:
    """Diameter of each component, in its induced subgraph or in the ambient graph."""
    adj = g.adj
    out = []
    for comp in dec.components:
        members = set(comp.vertices)
        best = 0
        for src in comp.vertices:
            dist = {src: 0}
            queue = deque([src])
            while queue:
                u = queue.popleft()
                for w in adj[u]:
                    if w not in dist and (not induced or w in members):
                        dist[w] = dist[u] + 1
                        queue.append(w)
            best = max(best, max(dist[v] for v in comp.vertices))
        out.append(best)
    return out


# ---------------------------------------------------------------- annulus variant


def _mass(nu: VertexMeasure, vertices: Iterable[int], region: set[int] | None) -> float:
    w = nu.weights
    return math.fsum(w[v] for v in vertices if region is None or v in region)


def annulus_round(
    g: Graph,
    component: Iterable[int],
    nu: VertexMeasure,
    s: int,
    t: int,
    center: int,
    region: Iterable[int] | None = None,
) -> tuple[set[int], int]:
    """Cut one component by annuli of width ``2s`` around ``center``.

    Deleted set: vertices whose in-component distance ``d`` to the center has
    ``(d - alpha) mod (t + 2s)`` in ``{1, ..., 2s}``.  Every shift ``alpha``
    is tried and the one deleting the least ``nu``-mass of ``region`` wins
    (ties go to the smallest shift).
    """
    if s < 1 or t < 1:
        raise GraphError("annulus cut needs s >= 1 and t >= 1")
    members = set(component)
    if center not in members:
        raise GraphError("center must lie in the component")
    region = None if region is None else set(region)
    delta = t + 2 * s
    dist = {center: 0}
    queue = deque([center])
    adj = g.adj
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if w in members and w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    # mass per residue class, then a cyclic window sum per shift
    shell = [0.0] * delta
    for v, d in dist.items():
        if region is None or v in region:
            shell[d % delta] += nu.weights[v]
    best_alpha, best_mass = 0, math.inf
    for alpha in range(delta):
        mass = math.fsum(shell[(alpha + k) % delta] for k in range(1, 2 * s + 1))
        if mass < best_mass:
            best_alpha, best_mass = alpha, mass
    deleted = {v for v, d in dist.items() if 1 <= (d - best_alpha) % delta <= 2 * s}
    return deleted, best_alpha


def annulus_decompose(
    g: Graph,
    nu: VertexMeasure,
    s: int,
    t: int,
    rounds: int,
    region: Iterable[int] | None = None,
) -> Decomposition:
    if rounds < 1:
        raise GraphError("rounds must be >= 1")
    region = None if region is None else set(region)
    mask = [True] * g.n
    leader = _label_components(g, mask)
    deleted_rounds, offsets = [], []
    for _ in range(rounds):
        removed: list[int] = []
        chosen = []
        for comp in _components_of(leader):
            cut, alpha = annulus_round(g, comp.vertices, nu, s, t, comp.leader, region)
            removed.extend(cut)
            chosen.append((comp.leader, alpha))
        for v in removed:
            mask[v] = False
        deleted_rounds.append(tuple(sorted(removed)))
        offsets.append(tuple(chosen))
        leader = _label_components(g, mask)
    return Decomposition(
        g.n,
        t + 2 * s,
        rounds,
        ANNULUS,
        tuple(offsets),
        tuple(deleted_rounds),
        _components_of(leader),
        tuple(leader),
    )


def surviving_mass(dec: Decomposition, nu: VertexMeasure, region: Iterable[int] | None = None) -> float:
    region = None if region is None else set(region)
    return _mass(nu, (v for c in dec.components for v in c.vertices), region)


# ---------------------------------------------------------------- parameters


def phi_threshold(D, s) -> float:
    """Expansion threshold ``s/(4D) - 2``; may be negative."""
    if D <= 0:
        raise GraphError("D must be positive")
    return s / (4 * D) - 2


@dataclass(frozen=True)
class CutParameters:
    s: int
    t: int
    n: int
    D: Fraction
    r: int

    @property
    def delta(self) -> int:
        return self.t + 2 * self.s

    @property
    def phi(self) -> Fraction:
        return Fraction(self.s) / (4 * self.D) - 2

    def growth_condition(self) -> bool:
        """(phi + 1) * (t / (2s + t))**r > 1, exactly."""
        return (self.phi + 1) * Fraction(self.t, 2 * self.s + self.t) ** self.r > 1

    def diameter_condition(self) -> bool:
        """(r - 1)(4(r + 1)t + 1) < n - s/2, exactly."""
        return kpr_diameter_bound(self.t, self.r) < self.n - Fraction(self.s, 2)

    def verify(self) -> bool:
        return (
            2 * self.n > self.s > 8 * self.D
            and self.growth_condition()
            and self.diameter_condition()
        )

    def to_json(self) -> dict:
        return {
            "D": str(self.D),
            "r": self.r,
            "s": self.s,
            "t": self.t,
            "n": self.n,
            "delta": self.delta,
            "phi": str(self.phi),
            "phi_float": float(self.phi),
            "verified": self.verify(),
        }


def parameter_search(D, r: int) -> CutParameters:
    """Smallest s > 8D, then smallest t meeting the growth condition, then smallest n.

    ``D`` may be an int, float, string or Fraction; arithmetic is exact.
    """
    D = Fraction(D) if not isinstance(D, str) else Fraction(D)
    if D <= 0:
        raise GraphError("D must be positive")
    if r < 2:
        raise GraphError("excluded-minor order r must be >= 2")
    s = math.floor(8 * D) + 1
    while Fraction(s) / (4 * D) - 1 <= 1:
        s += 1
    c = Fraction(s) / (4 * D) - 1
    # t > 2s / (c**(1/r) - 1); start just below the real root, then settle exactly
    root = float(c) ** (1.0 / r)
    t = max(1, int(2 * s / (root - 1)) - 2)
    while t > 1 and c * t**r > (2 * s + t) ** r:
        t -= 1
    while not c * t**r > (2 * s + t) ** r:
        t += 1
    n = math.floor(kpr_diameter_bound(t, r) + Fraction(s, 2)) + 1
    params = CutParameters(s, t, n, D, r)
    if not params.verify():
        raise AssertionError(f"parameter search produced invalid {params}")
    return params
