import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lossyalloc.graph import (
    DisconnectedGraphError,
    GraphModelSpec,
    WeightedGraph,
    assign_weights,
    component_labels,
    diameter,
    generate,
    is_connected,
    laplacian,
    laplacian_eigenvalues,
    mean_degree,
    read_edge_list,
    spectral_bounds,
    union_graph,
    write_edge_list,
)

K2 = WeightedGraph.from_edges(2, [(0, 1)])
K3 = WeightedGraph.from_edges(3, [(0, 1), (0, 2), (1, 2)])
STAR3 = WeightedGraph.from_edges(4, [(0, 1), (0, 2), (0, 3)])
C4 = WeightedGraph.from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)])


def random_graph(seed, n_max=12):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, n_max + 1))
    g = generate(GraphModelSpec("er", {"n": n, "p": float(rng.uniform(0.1, 0.9))}, seed=seed))
    return assign_weights(g, 0, 10, seed + 1)


models = st.sampled_from([
    GraphModelSpec("er", {"n": 25, "p": 0.2}),
    GraphModelSpec("sw", {"n": 25, "m": 2, "theta": 0.3}),
    GraphModelSpec("sf", {"n": 40, "sigma": 2.7, "min_degree": 2}),
    GraphModelSpec("grid", {"rows": 4, "cols": 6}),
])


# construction ----------------------------------------------------------------

def test_weighted_graph_rejects_self_loops_and_bad_weights():
    with pytest.raises(ValueError):
        WeightedGraph(3, {(1, 1): 1.0})
    with pytest.raises(ValueError):
        WeightedGraph(3, {(0, 1): 0.0})
    with pytest.raises(ValueError):
        WeightedGraph(3, {(0, 5): 1.0})
    with pytest.raises(ValueError):
        WeightedGraph(3, {(0, 1): 1.0, (1, 0): 2.0})


def test_weighted_graph_is_symmetric():
    g = WeightedGraph(3, {(2, 0): 1.5, (1, 2): 0.5})
    W = g.adjacency()
    assert np.array_equal(W, W.T)
    assert g.weight(0, 2) == g.weight(2, 0) == 1.5
    assert g.weight(0, 1) == 0.0
    assert g.neighbors(2) == [0, 1]


def test_generate_grid_2x2():
    g = generate(GraphModelSpec("grid", {"rows": 2, "cols": 2}))
    assert (g.n, g.n_edges) == (4, 4)
    assert is_connected(g)


def test_generate_er_mean_edge_count():
    counts = [generate(GraphModelSpec("er", {"n": 20, "p": 0.3}, seed=s)).n_edges for s in range(1000)]
    expected = 0.3 * 20 * 19 / 2
    assert abs(np.mean(counts) - expected) <= 0.03 * expected


def test_generate_small_world_without_shortcuts_is_a_ring():
    g = generate(GraphModelSpec("sw", {"n": 10, "m": 1, "theta": 0}, seed=3))
    assert g.n_edges == 10
    assert np.all(g.degrees() == 2)


def test_generate_small_world_shortcuts_only_add_links():
    ring = generate(GraphModelSpec("sw", {"n": 30, "m": 2, "theta": 0}, seed=1))
    g = generate(GraphModelSpec("sw", {"n": 30, "m": 2, "theta": 1}, seed=1))
    assert set(ring.edges) <= set(g.edges)
    assert g.n_edges > ring.n_edges


def test_generate_scale_free_is_simple():
    g = generate(GraphModelSpec("sf", {"n": 200, "sigma": 2.5, "min_degree": 2}, seed=4))
    assert all(i < j for i, j in g.edges)
    assert g.degrees().max() <= 199
    # the heavy tail shows up as hubs well above the minimum degree
    assert g.degrees().max() >= 10


@given(models, st.integers(0, 2**32 - 1))
def test_generate_is_a_pure_function_of_spec_and_seed(spec, seed):
    a = generate(spec.with_seed(seed))
    b = generate(spec.with_seed(seed))
    assert a.weights == b.weights


@pytest.mark.parametrize("kind,params", [
    ("er", {"n": 5, "p": 1.5}),
    ("sw", {"n": 10, "m": 0, "theta": 0.1}),
    ("sw", {"n": 10, "m": 1, "theta": -0.1}),
    ("sf", {"n": 10, "sigma": 2.0, "min_degree": 1}),
    ("sf", {"n": 10, "sigma": 3.0, "min_degree": 0}),
    ("grid", {"rows": 1, "cols": 1}),
    ("er", {"n": 5}),
    ("er", {"n": 5, "p": 0.1, "theta": 0.2}),
    ("lattice", {"rows": 2, "cols": 2}),
])
def test_model_spec_domain_errors(kind, params):
    with pytest.raises(ValueError):
        GraphModelSpec(kind, params)


# weights ---------------------------------------------------------------------

def test_assign_weights_degenerate_range():
    g = assign_weights(K3, 1, 1, seed=0)
    assert set(g.weights.values()) == {1.0}


@given(st.integers(0, 2**32 - 1))
def test_assign_weights_range_and_determinism(seed):
    base = generate(GraphModelSpec("er", {"n": 15, "p": 0.4}, seed=seed))
    g = assign_weights(base, 0, 10, seed)
    w = np.array(list(g.weights.values()))
    assert np.all((w > 0) & (w <= 10))
    W = g.adjacency()
    assert np.array_equal(W, W.T)
    assert assign_weights(base, 0, 10, seed).weights == g.weights


def test_assign_weights_rejects_negative_range():
    with pytest.raises(ValueError):
        assign_weights(K2, -1, 1, 0)
    with pytest.raises(ValueError):
        assign_weights(K2, 0, 0, 0)


# Laplacian and spectrum --------------------------------------------------------

def test_laplacian_k2():
    assert np.array_equal(laplacian(K2), [[1, -1], [-1, 1]])


def test_laplacian_empty_graph_is_zero():
    assert np.array_equal(laplacian(WeightedGraph(3)), np.zeros((3, 3)))


def test_laplacian_weighted_triangle():
    g = WeightedGraph(3, {(0, 1): 1.0, (1, 2): 2.0, (0, 2): 3.0})
    L = laplacian(g)
    assert np.allclose(L.sum(axis=1), 0, atol=0)
    assert (L[0, 1], L[1, 2], L[0, 2]) == (-1.0, -2.0, -3.0)
    assert np.array_equal(L, L.T)


@given(models, st.integers(0, 1000))
def test_laplacian_rows_sum_to_zero(spec, seed):
    g = assign_weights(generate(spec.with_seed(seed)), 0, 10, seed)
    assert np.max(np.abs(laplacian(g).sum(axis=1))) <= 1e-12


@pytest.mark.parametrize("g,expected", [(K2, (2, 2)), (K3, (3, 3)), (STAR3, (1, 4)), (C4, (2, 4))])
def test_spectral_bounds_closed_forms(g, expected):
    s = spectral_bounds(g)
    assert s.lambda2 == pytest.approx(expected[0], abs=1e-10)
    assert s.lambdaN == pytest.approx(expected[1], abs=1e-10)
    assert s.ratio == pytest.approx(expected[0] / expected[1] ** 2)


def test_spectral_bounds_rejects_disconnected():
    with pytest.raises(DisconnectedGraphError):
        spectral_bounds(WeightedGraph(2))
    with pytest.raises(DisconnectedGraphError):
        spectral_bounds(WeightedGraph.from_edges(4, [(0, 1), (2, 3)]))


@given(st.integers(0, 10_000))
def test_jacobi_matches_lapack_oracle(seed):
    g = random_graph(seed, n_max=25)
    ours = laplacian_eigenvalues(g)
    ref = np.linalg.eigvalsh(laplacian(g))
    scale = max(1.0, float(np.max(np.abs(ref))))
    assert np.max(np.abs(ours - ref)) <= 1e-10 * scale


@given(st.integers(0, 10_000))
def test_spectral_invariants_on_connected_graphs(seed):
    g = random_graph(seed)
    if not is_connected(g):
        return
    s = spectral_bounds(g)
    W = g.adjacency()
    assert 0 < s.lambda2 <= s.lambdaN * (1 + 1e-12)
    assert s.lambdaN <= 2 * W.sum(axis=1).max() * (1 + 1e-12)
    # zero eigenvalue is simple
    assert np.sum(np.abs(laplacian_eigenvalues(g)) < 1e-9) == 1


@given(models, st.integers(0, 1000))
def test_algebraic_connectivity_diameter_bound(spec, seed):
    g = generate(spec.with_seed(seed))
    if not is_connected(g):
        return
    assert spectral_bounds(g).lambda2 >= 1 / (g.n * diameter(g))


@pytest.mark.parametrize("edges,n,components", [
    ([(0, 1), (2, 3)], 4, 2),
    ([(0, 1), (1, 2), (3, 4)], 6, 3),
])
def test_zero_eigenvalue_multiplicity_counts_components(edges, n, components):
    g = WeightedGraph.from_edges(n, edges)
    assert np.sum(np.abs(laplacian_eigenvalues(g)) < 1e-9) == components
    assert len(set(component_labels(g).tolist())) == components


# connectivity, union, degree ---------------------------------------------------

def test_is_connected_small_cases():
    assert is_connected(K2)
    assert not is_connected(WeightedGraph(2))


def test_replication_instance_is_connected_with_mean_degree_5_6(er20):
    assert is_connected(er20)
    assert mean_degree(er20) == pytest.approx(5.6)


def test_union_idempotent():
    assert union_graph([C4, C4]).weights == C4.weights


def test_union_of_two_links_is_a_path():
    u = union_graph([WeightedGraph.from_edges(3, [(0, 1)]), WeightedGraph.from_edges(3, [(1, 2)])])
    assert u.edges == [(0, 1), (1, 2)]
    assert is_connected(u)


def test_union_of_snapshots_recovers_base_triangle():
    base = WeightedGraph(3, {(0, 1): 1.0, (1, 2): 2.0, (0, 2): 3.0})
    # every survival pattern over two snapshots in which each link survives at least once
    for a in range(8):
        for b in range(8):
            if a | b != 7:
                continue
            snaps = [base.subgraph([(m >> k) & 1 for k in range(3)]) for m in (a, b)]
            assert union_graph(snaps).weights == base.weights


def test_union_keeps_earliest_weight_and_checks_sizes():
    a = WeightedGraph(2, {(0, 1): 1.0})
    b = WeightedGraph(2, {(0, 1): 5.0})
    assert union_graph([a, b]).weight(0, 1) == 1.0
    with pytest.raises(ValueError):
        union_graph([a, WeightedGraph(3)])


edge_sets = st.sets(st.tuples(st.integers(0, 5), st.integers(0, 5)).filter(lambda e: e[0] != e[1]))


@given(edge_sets, edge_sets, edge_sets)
def test_union_is_associative_and_commutative(a, b, c):
    A, B, C = (WeightedGraph.from_edges(6, s) for s in (a, b, c))
    left = union_graph([union_graph([A, B]), C])
    right = union_graph([A, union_graph([B, C])])
    assert set(left.edges) == set(right.edges)
    assert set(union_graph([A, B]).edges) == set(union_graph([B, A]).edges)


def test_mean_degree_examples():
    ring = generate(GraphModelSpec("sw", {"n": 10, "m": 1, "theta": 0}, seed=0))
    assert mean_degree(ring) == 2
    assert mean_degree(K2) == 1


def test_diameter():
    assert diameter(C4) == 2
    with pytest.raises(DisconnectedGraphError):
        diameter(WeightedGraph(3))


# edge-list format ----------------------------------------------------------------

def test_edge_list_is_one_based_with_header():
    buf = io.StringIO()
    write_edge_list(WeightedGraph(3, {(0, 2): 2.5}), buf)
    assert buf.getvalue() == "n 3\n1 3 2.5\n"


@given(st.integers(0, 1000))
def test_edge_list_round_trip(seed):
    g = random_graph(seed)
    buf = io.StringIO()
    write_edge_list(g, buf)
    buf.seek(0)
    back = read_edge_list(buf)
    assert back.n == g.n and back.weights == g.weights


def test_edge_list_comments_and_errors():
    g = read_edge_list(io.StringIO("# base graph\nn 2\n1 2\n"))
    assert g.weights == {(0, 1): 1.0}
    with pytest.raises(ValueError):
        read_edge_list(io.StringIO("3\n1 2 1.0\n"))
    with pytest.raises(ValueError):
        read_edge_list(io.StringIO("n 2\n1 1 1.0\n"))
    assert math.isclose(mean_degree(g), 1.0)
