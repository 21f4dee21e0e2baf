import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from coarsecut.analysis import (
    ExhaustionTrace,
    ExpansionCertificate,
    brute_force_min_expansion,
    certificate_check,
    check_separation,
    contract_profile,
    exhaust,
    phi_threshold,
    poincare_test,
    profile_from_matrix,
    signed_bumps,
    trace_mass_balance,
    upper_bound_violations,
)
from coarsecut.embedding import multiscale_embed
from coarsecut.graphcore import (
    FamilySpec,
    Graph,
    GraphError,
    PairMeasure,
    VertexMeasure,
    complete_graph,
    far_pair_measure,
    generate,
    metric_of,
    star_graph,
)


@pytest.fixture(scope="module")
def p5():
    return metric_of(generate(FamilySpec("path", n=5)))


def two_triangles(gap=10):
    """Two triangles joined through a path with ``gap`` edges."""
    edges = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]
    prev, nxt = 2, 6
    for _ in range(gap - 1):
        edges.append((prev, nxt))
        prev, nxt = nxt, nxt + 1
    edges.append((prev, 3))
    return Graph(nxt, tuple(edges))


# ---------------------------------------------------------------- profile


def test_profile_on_grid(grid4):
    m = metric_of(grid4)
    p = multiscale_embed(grid4, 5, 4, 128, seed=0)
    prof = contract_profile(p, m)
    assert prof.ts == list(range(1, 7))
    assert prof.at(1)[1] <= 3
    assert prof.upper_ok
    assert upper_bound_violations(p, m) == 0
    # rho1 is a cumulative minimum, so it never decreases in t
    assert all(a <= b for a, b in zip(prof.rho1, prof.rho1[1:]))
    assert prof.rho1_at_least(7) == math.inf


def test_profile_single_pair():
    m = metric_of(Graph(2, ((0, 1),)))
    prof = profile_from_matrix(np.array([[0.0, 0.5], [0.5, 0.0]]), m)
    assert prof.ts == [1] and prof.rho1 == [0.5] and prof.rho2 == [0.5]
    assert prof.to_csv() == "t,rho1,rho2\n1,0.5,0.5\n"


def test_profile_flags_upper_violation():
    m = metric_of(Graph(2, ((0, 1),)))
    prof = profile_from_matrix(np.array([[0.0, 4.0], [4.0, 0.0]]), m)
    assert not prof.upper_ok


def test_contract_profile_size_mismatch(p9, grid4):
    p = multiscale_embed(p9, 2, 2, 4, seed=0)
    with pytest.raises(GraphError):
        contract_profile(p, metric_of(grid4))


# ---------------------------------------------------------------- brute force oracle


def test_brute_force_star():
    m = metric_of(star_graph(4))
    a, r = brute_force_min_expansion(m, VertexMeasure.uniform(5), 1, 3)
    assert len(a) == 4 and 0 in a
    assert r == Fraction(1, 4)


def test_brute_force_k4_singletons():
    a, r = brute_force_min_expansion(metric_of(complete_graph(4)), VertexMeasure.uniform(4), 1, 1)
    assert a == (0,) and r == 3


def test_brute_force_zero_mass_boundary(p9):
    m = metric_of(p9)
    nu = VertexMeasure(tuple([1.0, 1.0, 0.0] + [1.0] * 6))
    a, r = brute_force_min_expansion(m, nu, 1, 3)
    assert r == 0 and a == (0, 1)


def test_brute_force_nothing_qualifies(p9):
    nu = VertexMeasure(tuple([0.0] * 9))
    assert brute_force_min_expansion(metric_of(p9), nu, 1, 3) == (None, None)


# ---------------------------------------------------------------- exhaustion


def test_exhaust_p5_certificate(p5):
    out = exhaust(p5, VertexMeasure.uniform(5), 1, 3, Fraction(3, 10))
    assert isinstance(out, ExpansionCertificate)
    assert out.region == (0, 1, 2, 3, 4)
    assert out.min_ratio == Fraction(1, 3)
    assert certificate_check(out, p5, VertexMeasure.uniform(5), 1, 3)


def test_exhaust_p5_trace(p5):
    out = exhaust(p5, VertexMeasure.uniform(5), 1, 3, Fraction(2, 5))
    assert isinstance(out, ExhaustionTrace)
    (step,) = out.steps
    assert step.removed == (0, 1, 2) and step.boundary == (3,)
    assert step.ratio == Fraction(1, 3)
    assert out.remainder == (4,)
    assert check_separation(out, p5, 1)


def test_exhaust_star_is_already_small():
    m = metric_of(star_graph(4))
    out = exhaust(m, VertexMeasure.uniform(5), 1, 3, Fraction(1, 2))
    assert isinstance(out, ExhaustionTrace)
    assert out.steps == [] and out.remainder == (0, 1, 2, 3, 4)


@pytest.mark.parametrize("strategy", ["exhaustive", "balls", "sweep", "candidates"])
def test_exhaust_two_clusters(strategy):
    g = two_triangles()
    m = metric_of(g)
    w = [1.0] * 6 + [0.0] * (g.n - 6)
    nu = VertexMeasure(tuple(w))
    out = exhaust(m, nu, 2, 3, Fraction(1, 10), strategy=strategy)
    assert isinstance(out, ExhaustionTrace)
    assert check_separation(out, m, 2)
    heavy = [p for p in out.pieces if sum(w[v] for v in p) > 0]
    assert sorted(tuple(v for v in p if v < 6) for p in heavy) == [(0, 1, 2), (3, 4, 5)]
    assert out.remainder == () and out.dropped == (8, 9, 10, 11, 12)


def test_exhaust_rejects_bad_input(p5):
    nu = VertexMeasure.uniform(5)
    with pytest.raises(GraphError):
        exhaust(p5, nu, 1, 3, 1, strategy="magic")
    with pytest.raises(GraphError):
        exhaust(p5, nu, 1, 0, 1)
    with pytest.raises(GraphError):
        exhaust(p5, VertexMeasure(tuple([0.0] * 5)), 1, 3, 1)


def test_exhaustive_strategy_size_limit():
    m = metric_of(generate(FamilySpec("path", n=25)))
    with pytest.raises(GraphError):
        exhaust(m, VertexMeasure.uniform(25), 1, 3, 1, strategy="exhaustive")


@pytest.mark.parametrize("seed", range(4))
def test_mass_balance(seed):
    g = generate(FamilySpec("series_parallel", n=40, seed=seed))
    m = metric_of(g)
    rng = np.random.default_rng(seed)
    nu = VertexMeasure(tuple(Fraction(int(x), 13) for x in rng.integers(0, 4, g.n)))
    out = exhaust(m, nu, 1, 4, 2)
    assert isinstance(out, ExhaustionTrace)
    bal = trace_mass_balance(out, nu)
    parts = bal["removed"] + bal["boundary"] + bal["remainder"] + bal["dropped"] + bal["untouched"]
    assert parts == bal["total"]
    # every removal pays at most phi times its mass in boundary
    assert bal["boundary"] <= 2 * bal["removed"]
    assert bal["untouched"] == 0


def test_certificate_check_rejects_tampering(p5):
    nu = VertexMeasure.uniform(5)
    cert = exhaust(p5, nu, 1, 3, Fraction(3, 10))
    data = cert.to_json()
    assert certificate_check(ExpansionCertificate.from_json(data), p5, nu, 1, 3)
    assert not certificate_check(ExpansionCertificate.from_json({**data, "phi": "1/2"}), p5, nu, 1, 3)
    assert not certificate_check(ExpansionCertificate.from_json({**data, "region": []}), p5, nu, 1, 3)
    assert not certificate_check(ExpansionCertificate.from_json({**data, "region": [0, 1]}), p5, nu, 1, 3)


def test_certificate_candidate_family_recheck():
    # too many points for exhaustive rechecking, so the candidate family is used
    m = metric_of(complete_graph(25))
    nu = VertexMeasure.uniform(25)
    cert = exhaust(m, nu, 1, 1, Fraction(1, 2))
    assert isinstance(cert, ExpansionCertificate)
    assert cert.scope == "candidate-family"
    assert certificate_check(cert, m, nu, 1, 1)


# ---------------------------------------------------------------- bumps and the Poincare chain


def test_phi_threshold_values():
    assert phi_threshold(1, 16) == 2
    assert phi_threshold(1, 9) == Fraction(1, 4)
    assert phi_threshold(Fraction(1, 2), 4) == 0


def test_signed_bumps_p9(p9):
    b = signed_bumps(metric_of(p9), [{0}, {8}], 4)
    assert b.value(0, (1, -1)) == 2 and b.value(8, (1, -1)) == -2
    assert b.value(1, (1, 1)) == 1 and b.value(4, (1, 1)) == 0
    assert b.lipschitz_ok()
    assert b.worst_jump(0, 8) == 4


def test_signed_bumps_reject_close_sets(p9):
    with pytest.raises(GraphError):
        signed_bumps(metric_of(p9), [{0}, {3}], 4)


@pytest.mark.parametrize("seed", range(5))
def test_signed_bumps_lipschitz_random(seed):
    g = generate(FamilySpec("random_tree", n=50, seed=seed))
    m = metric_of(g)
    rng = np.random.default_rng(seed)
    sets, used = [], set()
    for v in rng.permutation(g.n):
        v = int(v)
        if all(m.dist[v, u] >= 3 for u in used):
            sets.append({v})
            used.add(v)
    b = signed_bumps(m, sets, 3)
    assert b.lipschitz_ok()
    for x, y in itertools.combinations(range(g.n), 2):
        assert b.worst_jump(x, y) <= m.dist[x, y]


def test_poincare_p9_exact(p9):
    m = metric_of(p9)
    rep = poincare_test(m, far_pair_measure(m, 8), [{0}, {8}], 4)
    assert not rep.skipped
    assert rep.integral == 2 and rep.lower == 1
    assert rep.holds and rep.d_lower_bound == 2


def test_poincare_vacuous_when_sets_miss_support(p9):
    m = metric_of(p9)
    rep = poincare_test(m, far_pair_measure(m, 8), [{4}], 2)
    assert rep.integral == 0 and rep.lower == 0 and rep.holds


def test_poincare_one_sided(p9):
    m = metric_of(p9)
    mu = PairMeasure(((0, 8),), (1.0,), 8, 9)
    rep = poincare_test(m, mu, [{0}], 4)
    # the marginal is taken on the first coordinate, so nu({0}) = 1
    assert rep.integral == 2 and rep.lower == 1


def test_poincare_skips_violated_preconditions(p9):
    m = metric_of(p9)
    rep = poincare_test(m, far_pair_measure(m, 8), [{0, 1, 2, 3, 4, 5, 6}], 4)
    assert rep.skipped and "diameter" in rep.reason
    rep = poincare_test(m, far_pair_measure(m, 8), [{0}, {2}], 4)
    assert rep.skipped
