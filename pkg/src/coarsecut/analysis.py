"""Verification of embeddings and the expansion/exhaustion machinery.

Masses in the exhaustion and certificate code are exact rationals
(``Fraction`` of the stored weights), so threshold comparisons never depend
on rounding.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .decomposition import phi_threshold
from .embedding import L1Point, block_distance_matrix
from .graphcore import GraphError, MetricSpace, PairMeasure, VertexMeasure, proximity_graph

EXHAUSTIVE_LIMIT = 20
STRATEGIES = ("exhaustive", "balls", "sweep", "candidates")

__all__ = [
    "DistortionProfile",
    "ExhaustionStep",
    "ExhaustionTrace",
    "ExpansionCertificate",
    "PoincareReport",
    "SignedBumps",
    "brute_force_min_expansion",
    "certificate_check",
    "check_separation",
    "contract_profile",
    "exhaust",
    "phi_threshold",
    "poincare_test",
    "signed_bumps",
    "trace_mass_balance",
]


# ---------------------------------------------------------------- distortion profile


@dataclass
class DistortionProfile:
    ts: list[int]
    rho1: list[float]
    rho2: list[float]
    upper_ok: bool
    meta: dict = field(default_factory=dict)

    def at(self, t: int) -> tuple[float, float]:
        k = self.ts.index(t)
        return self.rho1[k], self.rho2[k]

    def rho1_at_least(self, t: int) -> float:
        """Cumulative minimum over pairs at graph distance >= t (t need not be a bucket)."""
        vals = [r for tt, r in zip(self.ts, self.rho1) if tt >= t]
        return min(vals) if vals else math.inf

    def to_json(self) -> dict:
        return {
            "buckets": [
                {"t": t, "rho1": r1, "rho2": r2} for t, r1, r2 in zip(self.ts, self.rho1, self.rho2)
            ],
            "upper_ok": self.upper_ok,
            "meta": self.meta,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "rho1", "rho2"])
        for row in zip(self.ts, self.rho1, self.rho2):
            w.writerow([row[0], repr(row[1]), repr(row[2])])
        return buf.getvalue()


def profile_from_matrix(emb: np.ndarray, m: MetricSpace, meta: dict | None = None) -> DistortionProfile:
    d = m.dist
    iu = np.triu_indices(m.n, k=1)
    dv, ev = d[iu], emb[iu]
    ts = sorted(set(dv.tolist()))
    rho1, rho2 = [], []
    for t in ts:
        rho1.append(float(ev[dv >= t].min()))
        rho2.append(float(ev[dv <= t].max()))
    upper_ok = all(r2 <= 3 * t for t, r2 in zip(ts, rho2))
    return DistortionProfile(ts, rho1, rho2, upper_ok, dict(meta or {}))


def contract_profile(p: L1Point, m: MetricSpace) -> DistortionProfile:
    if p.n != m.n:
        raise GraphError("embedding and metric cover different point sets")
    meta = {
        "n": m.n,
        "diameter": m.diameter,
        "i_max": p.i_max,
        "samples": p.blocks[0].samples,
        "rounds": p.rounds,
        "seed": p.seed,
        "base": p.base,
    }
    return profile_from_matrix(p.distance_matrix(), m, meta)


def upper_bound_violations(p: L1Point, m: MetricSpace) -> int:
    """Pairs where some block's empirical distance exceeds d(u, v), or the total exceeds 3 d(u, v)."""
    d = m.dist.astype(np.float64)
    total = np.zeros_like(d)
    bad = np.zeros(d.shape, dtype=bool)
    for b in p.blocks:
        bd = block_distance_matrix(b)
        bad |= bd > d
        total += b.weight * bd
    bad |= total > 3 * d
    return int(np.triu(bad, k=1).sum())


# ---------------------------------------------------------------- exhaustion


def _q(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


class _Space:
    """Proximity graph restricted to a working set, with exact masses and far-pair masks."""

    def __init__(self, m: MetricSpace, nu: VertexMeasure, s: int, T):
        if len(nu.weights) != m.n:
            raise GraphError("measure and metric sizes differ")
        self.m, self.s, self.T = m, s, T
        self.w = [_q(x) for x in nu.weights]
        g = proximity_graph(m, s)
        self.nbr = [set(a) for a in g.adj]

    def mass(self, a: Iterable[int]) -> Fraction:
        return sum((self.w[v] for v in a), Fraction(0))

    def boundary(self, a: set[int], region: set[int]) -> set[int]:
        out = set()
        for v in a:
            out |= self.nbr[v]
        return (out & region) - a

    def small(self, a: Sequence[int]) -> bool:
        return self.m.set_diameter(a) < self.T

    def diam(self, region: set[int]) -> int:
        return self.m.set_diameter(sorted(region))


def _bounded_subsets(m: MetricSpace, region: list[int], T):
    """All nonempty subsets of ``region`` whose pairwise distances are < T, in increasing order."""
    d = m.dist
    out: list[tuple[int, ...]] = []

    def grow(current: list[int], candidates: list[int]):
        for k, v in enumerate(candidates):
            nxt = current + [v]
            out.append(tuple(nxt))
            grow(nxt, [w for w in candidates[k + 1 :] if d[v, w] < T])

    grow([], sorted(region))
    return out


def _candidate_sets(sp: _Space, region: set[int], strategy: str) -> list[tuple[int, ...]]:
    pts = sorted(region)
    if strategy == "exhaustive":
        if len(pts) > EXHAUSTIVE_LIMIT:
            raise GraphError(f"exhaustive search limited to {EXHAUSTIVE_LIMIT} points, got {len(pts)}")
        return _bounded_subsets(sp.m, pts, sp.T)
    d = sp.m.dist
    found: set[tuple[int, ...]] = set()
    for c in pts:
        order = sorted(pts, key=lambda v: (d[c, v], v))
        if strategy in ("balls", "candidates"):
            for rad in sorted({int(d[c, v]) for v in pts}):
                ball = tuple(sorted(v for v in pts if d[c, v] <= rad))
                if sp.small(ball):
                    found.add(ball)
        if strategy in ("sweep", "candidates"):
            for k in range(1, len(order) + 1):
                pre = tuple(sorted(order[:k]))
                if not sp.small(pre):
                    break
                found.add(pre)
    return sorted(found)


@dataclass
class ExhaustionStep:
    removed: tuple[int, ...]
    boundary: tuple[int, ...]
    ratio: Fraction
    surviving: tuple[int, ...]


@dataclass
class ExhaustionTrace:
    steps: list[ExhaustionStep]
    remainder: tuple[int, ...]
    s: int
    T: float
    phi: Fraction
    strategy: str
    status: str = "exhausted"
    dropped: tuple[int, ...] = ()

    @property
    def pieces(self) -> list[tuple[int, ...]]:
        """Removed sets followed by the final small remainder (when nonempty)."""
        out = [st.removed for st in self.steps]
        if self.remainder:
            out.append(self.remainder)
        return out

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "s": self.s,
            "T": _num(self.T),
            "phi": str(self.phi),
            "strategy": self.strategy,
            "steps": [_step_json(st) for st in self.steps],
            "remainder": list(self.remainder),
            "dropped": list(self.dropped),
        }


@dataclass
class ExpansionCertificate:
    region: tuple[int, ...]
    phi: Fraction
    scope: str
    strategy: str
    s: int
    T: float
    checked: int
    min_ratio: Fraction | None
    steps: list[ExhaustionStep] = field(default_factory=list)
    status: str = "certificate"

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "region": list(self.region),
            "phi": str(self.phi),
            "scope": self.scope,
            "strategy": self.strategy,
            "s": self.s,
            "T": _num(self.T),
            "checked": self.checked,
            "min_ratio": None if self.min_ratio is None else str(self.min_ratio),
            "steps": [_step_json(st) for st in self.steps],
        }

    @classmethod
    def from_json(cls, data: dict) -> "ExpansionCertificate":
        return cls(
            tuple(data["region"]),
            Fraction(data["phi"]),
            data["scope"],
            data["strategy"],
            data["s"],
            data["T"],
            data["checked"],
            None if data["min_ratio"] is None else Fraction(data["min_ratio"]),
        )


def _num(x):
    return int(x) if float(x).is_integer() else float(x)


def _step_json(st: ExhaustionStep) -> dict:
    return {
        "removed": list(st.removed),
        "boundary": list(st.boundary),
        "ratio": str(st.ratio),
        "surviving": list(st.surviving),
    }


def _ratio(bm: Fraction, am: Fraction) -> Fraction:
    return bm / am


def exhaust(
    m: MetricSpace,
    nu: VertexMeasure,
    s: int,
    T,
    phi,
    strategy: str = "candidates",
    points: Iterable[int] | None = None,
) -> ExpansionCertificate | ExhaustionTrace:
    """Greedy exhaustion on the proximity graph ``G(s)``.

    While the working set has metric diameter >= T, look for a proper subset
    ``A`` of diameter < T with ``nu(A) > 0`` and ``nu(boundary A) <= phi nu(A)``.
    Among qualifying sets the heaviest is removed together with its boundary
    (ties: lexicographically smallest).  No qualifying set means the working
    set is returned as a certificate; reaching diameter < T returns the trace.
    A working set that still has large diameter but no mass is left out of
    the pieces and reported as ``dropped``.
    """
    if strategy not in STRATEGIES:
        raise GraphError(f"unknown strategy {strategy!r}")
    if T <= 0:
        raise GraphError("T must be positive")
    if nu.total <= 0:
        raise GraphError("measure is empty")
    phi = _q(phi)
    sp = _Space(m, nu, s, T)
    region = set(range(m.n) if points is None else points)
    steps: list[ExhaustionStep] = []
    while region and sp.diam(region) >= T:
        if sp.mass(region) == 0:
            return ExhaustionTrace(steps, (), s, T, phi, strategy, dropped=tuple(sorted(region)))
        best = None
        checked = 0
        min_ratio = None
        for a in _candidate_sets(sp, region, strategy):
            if len(a) == len(region):
                continue
            am = sp.mass(a)
            if am <= 0:
                continue
            checked += 1
            aset = set(a)
            bm = sp.mass(sp.boundary(aset, region))
            ratio = _ratio(bm, am)
            if min_ratio is None or ratio < min_ratio:
                min_ratio = ratio
            if bm <= phi * am:
                key = (-am, a)
                if best is None or key < best[0]:
                    best = (key, a, ratio)
        if best is None:
            scope = "exhaustive" if strategy == "exhaustive" else "candidate-family"
            return ExpansionCertificate(
                tuple(sorted(region)), phi, scope, strategy, s, T, checked, min_ratio, steps
            )
        _, a, ratio = best
        aset = set(a)
        bd = sp.boundary(aset, region)
        region -= aset | bd
        steps.append(ExhaustionStep(a, tuple(sorted(bd)), ratio, tuple(sorted(region))))
    return ExhaustionTrace(steps, tuple(sorted(region)), s, T, phi, strategy)


def brute_force_min_expansion(
    m: MetricSpace,
    nu: VertexMeasure,
    s: int,
    T,
    region: Iterable[int] | None = None,
) -> tuple[tuple[int, ...] | None, Fraction | None]:
    """Exact minimum of nu(boundary A) / nu(A) over nonempty proper subsets A of the region.

    Only sets of metric diameter < T and positive mass count.  Ties go to
    the lexicographically smallest vertex tuple.  Returns ``(None, None)``
    when no set qualifies.
    """
    pts = sorted(range(m.n) if region is None else set(region))
    if len(pts) > EXHAUSTIVE_LIMIT:
        raise GraphError(f"brute force limited to {EXHAUSTIVE_LIMIT} points, got {len(pts)}")
    w = [Fraction(x) for x in nu.weights]
    inside = set(pts)
    d = m.dist
    best_a, best_r = None, None
    for k in range(1, len(pts)):
        for a in itertools.combinations(pts, k):
            if max((d[u, v] for u, v in itertools.combinations(a, 2)), default=0) >= T:
                continue
            am = sum((w[v] for v in a), Fraction(0))
            if am <= 0:
                continue
            bd = {x for x in inside if x not in a and any(0 < d[x, v] <= s for v in a)}
            r = sum((w[v] for v in bd), Fraction(0)) / am
            if best_r is None or r < best_r or (r == best_r and a < best_a):
                best_a, best_r = a, r
    return best_a, best_r


def check_separation(trace: ExhaustionTrace, m: MetricSpace, s: int) -> bool:
    pieces = trace.pieces
    for a, b in itertools.combinations(pieces, 2):
        if m.set_distance(a, b) < s:
            return False
    return True


def trace_mass_balance(trace: ExhaustionTrace, nu: VertexMeasure) -> dict:
    """Masses of removed sets, their boundaries and the remainder (exact)."""
    w = [_q(x) for x in nu.weights]

    def mass(vs):
        return sum((w[v] for v in vs), Fraction(0))

    removed = mass(v for st in trace.steps for v in st.removed)
    boundary = mass(v for st in trace.steps for v in st.boundary)
    rest = mass(trace.remainder)
    touched = {v for st in trace.steps for v in st.removed + st.boundary}
    touched |= set(trace.remainder) | set(trace.dropped)
    untouched = mass(v for v in range(len(w)) if v not in touched)
    return {
        "removed": removed,
        "boundary": boundary,
        "remainder": rest,
        "dropped": mass(trace.dropped),
        "untouched": untouched,
        "total": mass(range(len(w))),
        "pieces": removed + rest,
    }


def certificate_check(cert: ExpansionCertificate, m: MetricSpace, nu: VertexMeasure, s: int, T) -> bool:
    """Re-verify a certificate without trusting any of its statistics."""
    region = set(cert.region)
    if not region:
        return False
    w = [Fraction(x) for x in nu.weights]
    if sum((w[v] for v in region), Fraction(0)) <= 0:
        return False
    if m.set_diameter(sorted(region)) < T:
        return False
    phi = _q(cert.phi)
    if len(region) <= EXHAUSTIVE_LIMIT:
        _, ratio = brute_force_min_expansion(m, nu, s, T, region)
        return ratio is None or ratio > phi
    sp = _Space(m, nu, s, T)
    strategy = cert.strategy if cert.strategy != "exhaustive" else "candidates"
    for a in _candidate_sets(sp, region, strategy):
        if len(a) == len(region):
            continue
        am = sp.mass(a)
        if am > 0 and sp.mass(sp.boundary(set(a), region)) <= phi * am:
            return False
    return True


# ---------------------------------------------------------------- signed bumps and the Poincare chain


class SignedBumps:
    """Functions x -> theta_j (s/2 - dist(x, A_j)) near A_j and 0 elsewhere."""

    def __init__(self, m: MetricSpace, sets: Sequence[Iterable[int]], s: int):
        self.m, self.s = m, s
        self.sets = [tuple(sorted(set(a))) for a in sets]
        if any(not a for a in self.sets):
            raise GraphError("bump sets must be nonempty")
        for (i, a), (j, b) in itertools.combinations(enumerate(self.sets), 2):
            if m.set_distance(a, b) < s:
                raise GraphError(f"sets {i} and {j} are closer than s={s}")
        half = s / 2
        self.index = np.full(m.n, -1, dtype=np.int64)
        self.magnitude = np.zeros(m.n)
        for j, a in enumerate(self.sets):
            da = m.dist[:, list(a)].min(axis=1)
            near = da < half
            self.index[near] = j
            self.magnitude[near] = half - da[near]

    def value(self, x: int, theta: Sequence[int]) -> float:
        j = self.index[x]
        return 0.0 if j < 0 else theta[j] * float(self.magnitude[x])

    def worst_jump(self, x: int, y: int) -> float:
        """max over sign vectors of |f(x) - f(y)|."""
        a, b = self.magnitude[x], self.magnitude[y]
        i, j = self.index[x], self.index[y]
        if i >= 0 and i == j:
            return float(abs(a - b))
        return float(a + b)

    def lipschitz_ok(self) -> bool:
        a, idx, d = self.magnitude, self.index, self.m.dist
        same = (idx[:, None] == idx[None, :]) & (idx[:, None] >= 0)
        jump = np.where(same, np.abs(a[:, None] - a[None, :]), a[:, None] + a[None, :])
        return bool(np.all(jump <= d + 1e-12))


def signed_bumps(m: MetricSpace, sets: Sequence[Iterable[int]], s: int) -> SignedBumps:
    return SignedBumps(m, sets, s)


@dataclass
class PoincareReport:
    sets: list[tuple[int, ...]]
    s: int
    integral: float
    lower: float
    nu_union: float
    skipped: bool = False
    reason: str = ""

    @property
    def d_lower_bound(self) -> float:
        """The map x -> F_x is 1-Lipschitz, so any valid D is at least the integral."""
        return self.integral

    @property
    def holds(self) -> bool:
        return self.skipped or self.integral >= self.lower - 1e-9

    def to_json(self) -> dict:
        return {
            "sets": [list(a) for a in self.sets],
            "s": self.s,
            "integral": self.integral,
            "lower": self.lower,
            "nu_union": self.nu_union,
            "d_lower_bound": self.d_lower_bound,
            "holds": self.holds,
            "skipped": self.skipped,
            "reason": self.reason,
        }


def _sign_expectation(a: float, b: float, i: int, j: int) -> float:
    """E|theta_i a - theta_j b| over independent uniform signs."""
    if i < 0 or j < 0:
        return a + b
    if i == j:
        return abs(a - b)
    return (abs(a - b) + abs(a + b)) / 2


def poincare_test(m: MetricSpace, mu: PairMeasure, sets: Sequence[Iterable[int]], s: int) -> PoincareReport:
    sets = [tuple(sorted(set(a))) for a in sets]
    reason = ""
    try:
        mu.validate(m)
        bumps = SignedBumps(m, sets, s)
    except GraphError as exc:
        reason = str(exc)
    if not reason:
        for a in sets:
            if m.set_diameter(a) >= mu.separation - s / 2:
                reason = f"set {list(a)} has diameter >= separation - s/2"
                break
    if reason:
        return PoincareReport(sets, s, math.nan, math.nan, math.nan, True, reason)
    terms = []
    for (x, y), wt in zip(mu.pairs, mu.weights):
        a, b = float(bumps.magnitude[x]), float(bumps.magnitude[y])
        terms.append(wt * _sign_expectation(a, b, int(bumps.index[x]), int(bumps.index[y])))
    integral = math.fsum(terms)
    nu = mu.marginal()
    nu_union = math.fsum(nu.weights[v] for v in {v for a in sets for v in a})
    return PoincareReport(sets, s, integral, s / 4 * nu_union, nu_union)
