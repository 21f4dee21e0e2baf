import itertools
import json
from fractions import Fraction

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coarsecut.decomposition import (
    CutParameters,
    Decomposition,
    annulus_decompose,
    annulus_round,
    component_diameters,
    kpr_decompose,
    kpr_diameter_bound,
    parameter_search,
    residue_round,
    surviving_mass,
)
from coarsecut.graphcore import FamilySpec, GraphError, VertexMeasure, generate


def to_nx(g):
    h = nx.Graph()
    h.add_nodes_from(range(g.n))
    h.add_edges_from(g.edges)
    return h


def oracle_kpr(g, delta, offsets, include_leader=True):
    """Residue cuts recomputed with networkx on explicit induced subgraphs."""
    h = to_nx(g)
    live = set(range(g.n))
    deleted = []
    for x in offsets:
        removed = set()
        for comp in nx.connected_components(h.subgraph(live)):
            sub = h.subgraph(comp)
            lead = min(comp)
            for v, d in nx.single_source_shortest_path_length(sub, lead).items():
                if d % delta == x % delta and (include_leader or d > 0):
                    removed.add(v)
        deleted.append(sorted(removed))
        live -= removed
    comps = sorted((min(c), sorted(c)) for c in nx.connected_components(h.subgraph(live)))
    return deleted, comps


def test_residue_round_p9(p9):
    deleted, comps = residue_round(p9, None, 4, 2)
    assert deleted == {2, 6}
    assert [(c.leader, c.vertices) for c in comps] == [(0, (0, 1)), (3, (3, 4, 5)), (7, (7, 8))]


def test_residue_round_sub_component(p9):
    deleted, comps = residue_round(p9, {3, 4, 5}, 4, 1)
    assert deleted == {4}
    assert [c.vertices for c in comps] == [(3,), (5,)]


def test_residue_offset_equal_delta_hits_leader(p9):
    deleted, _ = residue_round(p9, None, 4, 4)
    assert deleted == {0, 4, 8}
    deleted, _ = residue_round(p9, None, 4, 4, include_leader=False)
    assert deleted == {4, 8}


def test_residue_offset_range(p9):
    with pytest.raises(GraphError):
        residue_round(p9, None, 4, 0)
    with pytest.raises(GraphError):
        residue_round(p9, None, 4, 5)


def test_kpr_single_and_two_rounds(p9):
    dec = kpr_decompose(p9, 4, 1, (2,))
    assert dec.deleted == ((2, 6),)
    dec2 = kpr_decompose(p9, 4, 2, (2, 1))
    assert dec2.deleted == ((2, 6), (1, 4, 8))
    assert [(c.leader, c.vertices) for c in dec2.components] == [(0, (0,)), (3, (3,)), (5, (5,)), (7, (7,))]
    assert dec2.check_partition(p9)


def test_kpr_large_delta_cuts_nothing(p9):
    dec = kpr_decompose(p9, 12, 1, (12,), include_leader=False)
    assert dec.deleted == ((),)
    assert len(dec.components) == 1
    # literal congruence: 12 = 0 mod 12 deletes the leader itself
    assert kpr_decompose(p9, 12, 1, (12,)).deleted == ((0,),)


@pytest.mark.parametrize(
    "spec,delta,rounds",
    [
        (FamilySpec("grid2d", rows=6, cols=7), 3, 3),
        (FamilySpec("random_tree", n=40, seed=2), 4, 3),
        (FamilySpec("series_parallel", n=40, seed=5), 2, 4),
        (FamilySpec("cycle", n=13), 5, 2),
    ],
)
@pytest.mark.parametrize("include_leader", [True, False])
def test_kpr_matches_networkx_oracle(spec, delta, rounds, include_leader):
    g = generate(spec)
    rng = np.random.default_rng(0)
    for _ in range(15):
        lam = tuple(int(x) for x in rng.integers(1, delta + 1, size=rounds))
        dec = kpr_decompose(g, delta, rounds, lam, include_leader)
        deleted, comps = oracle_kpr(g, delta, lam, include_leader)
        assert [list(d) for d in dec.deleted] == deleted
        assert [(c.leader, list(c.vertices)) for c in dec.components] == comps
        assert dec.check_partition(g)


@settings(max_examples=40, deadline=None)
@given(
    st.integers(2, 40),
    st.integers(0, 2**31),
    st.integers(1, 6),
    st.integers(1, 4),
    st.data(),
)
def test_partition_property(n, seed, delta, rounds, data):
    g = generate(FamilySpec("series_parallel", n=n, seed=seed))
    lam = data.draw(st.lists(st.integers(1, delta), min_size=rounds, max_size=rounds))
    dec = kpr_decompose(g, delta, rounds, lam)
    assert dec.check_partition(g)
    assert kpr_decompose(g, delta, rounds, lam) == dec


def test_check_partition_detects_tampering(p9):
    dec = kpr_decompose(p9, 4, 1, (2,))
    bad = Decomposition.from_json({**dec.to_json(), "deleted": [[2]]}, n=9)
    assert not bad.check_partition(p9)


def test_json_round_trip(p9):
    dec = kpr_decompose(p9, 4, 2, (2, 1))
    text = json.dumps(dec.to_json())
    assert Decomposition.from_json(json.loads(text)) == dec
    ann = annulus_decompose(p9, VertexMeasure.uniform(9), 1, 2, 2)
    assert Decomposition.from_json(json.loads(json.dumps(ann.to_json()))) == ann


@pytest.mark.parametrize("r,delta,expected", [(3, 2, 66), (5, 2, 196), (2, 10, 121)])
def test_diameter_bound_values(r, delta, expected):
    assert kpr_diameter_bound(delta, r) == expected


def test_diameter_bound_rejects_small_r():
    with pytest.raises(GraphError):
        kpr_diameter_bound(4, 1)


def test_component_diameters_induced_vs_weak(c8):
    # removing vertex 0 from C8 leaves a path 1..7: induced diameter 6, ambient 4
    dec = kpr_decompose(c8, 8, 1, (8,))
    assert dec.deleted == ((0,),)
    assert component_diameters(c8, dec) == [6]
    assert component_diameters(c8, dec, induced=False) == [4]


# ---------------------------------------------------------------- annulus


def test_annulus_round_p9(p9):
    nu = VertexMeasure.uniform(9)
    deleted, alpha = annulus_round(p9, range(9), nu, 1, 2, 0)
    assert alpha == 0 and deleted == {1, 2, 5, 6}
    masses = []
    for a in range(4):
        masses.append(sum(1 for d in range(9) if 1 <= (d - a) % 4 <= 2))
    assert masses == [4, 4, 5, 5]


def test_annulus_coverage_exact(grid10):
    # every vertex sits in exactly 2s of the delta shifted annulus sets
    from coarsecut.graphcore import bfs_distances

    dist = bfs_distances(grid10, 0)
    for s, t in [(1, 2), (2, 3), (3, 1)]:
        delta = t + 2 * s
        for d in dist:
            hits = sum(1 <= (d - a) % delta <= 2 * s for a in range(delta))
            assert hits == 2 * s


def test_annulus_mass_on_center_only(p9):
    nu = VertexMeasure(tuple([1.0] + [0.0] * 8))
    deleted, alpha = annulus_round(p9, range(9), nu, 1, 2, 0)
    assert 0 not in deleted
    assert sum(nu.weights[v] for v in deleted) == 0


def test_annulus_decompose_one_round(p9):
    nu = VertexMeasure.uniform(9)
    dec = annulus_decompose(p9, nu, 1, 2, 1)
    kept = surviving_mass(dec, nu)
    assert kept == pytest.approx(5 / 9)
    assert kept >= 0.5
    assert dec.check_partition(p9)


def test_annulus_zero_measure(p9):
    nu = VertexMeasure(tuple([0.0] * 9))
    dec = annulus_decompose(p9, nu, 1, 2, 2)
    assert surviving_mass(dec, nu) >= 0


def test_annulus_rejects_bad_parameters(p9):
    nu = VertexMeasure.uniform(9)
    with pytest.raises(GraphError):
        annulus_round(p9, range(9), nu, 0, 2, 0)
    with pytest.raises(GraphError):
        annulus_round(p9, {1, 2}, nu, 1, 2, 0)


def test_annulus_wide_gaps_keep_most_mass():
    g = generate(FamilySpec("grid2d", rows=20, cols=20))
    nu = VertexMeasure.uniform(g.n)
    dec = annulus_decompose(g, nu, 1, 100, 2)
    bound = (100 / 102) ** 2
    assert surviving_mass(dec, nu) >= bound - 1e-9


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("s,t,r", [(1, 2, 1), (1, 3, 3), (2, 5, 2)])
def test_annulus_surviving_mass_bound_exact(seed, s, t, r):
    g = generate(FamilySpec("series_parallel", n=60, seed=seed))
    rng = np.random.default_rng(seed)
    w = tuple(Fraction(int(x), 97) for x in rng.integers(0, 5, size=g.n))
    region = {v for v in range(g.n) if rng.random() < 0.7}
    nu = VertexMeasure(w)
    dec = annulus_decompose(g, nu, s, t, r, region)
    total = sum((w[v] for v in region), Fraction(0))
    kept = sum((w[v] for c in dec.components for v in c.vertices if v in region), Fraction(0))
    assert kept >= Fraction(t, 2 * s + t) ** r * total
    assert dec.check_partition(g)


def test_annulus_each_round_meets_averaging_bound():
    g = generate(FamilySpec("grid2d", rows=9, cols=9))
    nu = VertexMeasure.uniform(g.n)
    s, t = 2, 3
    from coarsecut.decomposition import _components_of, _label_components

    mask = [True] * g.n
    for _ in range(3):
        for comp in _components_of(_label_components(g, mask)):
            cut, _ = annulus_round(g, comp.vertices, nu, s, t, comp.leader)
            assert len(cut) <= 2 * s / (2 * s + t) * len(comp.vertices) + 1e-9
            for v in cut:
                mask[v] = False


# ---------------------------------------------------------------- parameters


def brute_params(D: Fraction, r: int):
    """Linear scans over s, t, n with exact arithmetic."""
    s = 1
    while not Fraction(s) > 8 * D:
        s += 1
    c = Fraction(s) / (4 * D) - 1
    t = 1
    while not c * Fraction(t, 2 * s + t) ** r > 1:
        t += 1
    n = 1
    while not ((r - 1) * (4 * (r + 1) * t + 1) < n - Fraction(s, 2) and 2 * n > s):
        n += 1
    return s, t, n


def test_params_d1_r2():
    p = parameter_search(1, 2)
    assert (p.s, p.t, p.n) == brute_params(Fraction(1), 2)
    assert p.phi == Fraction(1, 4)


@pytest.mark.parametrize("D", ["0.5", "1", "2", "0.3", "7/3"])
@pytest.mark.parametrize("r", [2, 3, 5])
def test_params_match_brute_force(D, r):
    p = parameter_search(D, r)
    assert (p.s, p.t, p.n) == brute_params(Fraction(D), r)
    assert p.verify()
    assert 2 * p.n > p.s > 8 * p.D


def test_params_reject_bad_input():
    with pytest.raises(GraphError):
        parameter_search(0, 3)
    with pytest.raises(GraphError):
        parameter_search(1, 1)


def test_cut_parameters_verify_detects_bad_choice():
    assert not CutParameters(9, 152, 1842, Fraction(1), 2).verify()
    assert not CutParameters(9, 153, 1841, Fraction(1), 2).verify()
    assert CutParameters(9, 153, 1842, Fraction(1), 2).verify()
