import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from influnet.graph import (
    DirectedNetwork,
    GraphError,
    Partition,
    UndefinedStatistic,
    assortativity,
    average_distance,
    degree_stats,
    density,
    describe,
    fast_greedy_communities,
    giant_component,
    load_edge_list,
    modularity,
    transitivity,
)


def net_of(n, edges):
    return DirectedNetwork.from_edges(n, edges)


def random_net(n, p, seed):
    rng = np.random.default_rng(seed)
    return DirectedNetwork.from_adjacency(rng.random((n, n)) < p)


@st.composite
def digraphs(draw, max_n=8):
    n = draw(st.integers(2, max_n))
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    chosen = draw(st.lists(st.sampled_from(pairs), max_size=len(pairs), unique=True))
    return net_of(n, chosen)


# --- oracles ---------------------------------------------------------------


def undirected_sets(net):
    nb = {i: set() for i in range(net.n)}
    for s, t in net.edges:
        nb[s].add(t)
        nb[t].add(s)
    return nb


def transitivity_bruteforce(net):
    nb = undirected_sets(net)
    closed = triples = 0
    for centre in range(net.n):
        for a, b in itertools.combinations(sorted(nb[centre]), 2):
            triples += 1
            closed += b in nb[a]
    return 0.0 if triples == 0 else closed / triples


def floyd_warshall_mean(net):
    n = net.n
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0)
    for s, t in net.edges:
        d[s, t] = 1
    for k in range(n):
        for i in range(n):
            for j in range(n):
                if d[i, k] + d[k, j] < d[i, j]:
                    d[i, j] = d[i, k] + d[k, j]
    vals = [d[i, j] for i in range(n) for j in range(n) if i != j and np.isfinite(d[i, j])]
    return sum(vals) / len(vals)


def modularity_oracle(net, labels):
    """Q = (1/2m) sum_ij [A_ij - k_i k_j / 2m] delta(c_i, c_j)."""
    nb = undirected_sets(net)
    m = sum(len(v) for v in nb.values()) / 2
    k = {i: len(nb[i]) for i in nb}
    q = 0.0
    for i in range(net.n):
        for j in range(net.n):
            if labels[i] == labels[j]:
                q += (1.0 if j in nb[i] else 0.0) - k[i] * k[j] / (2 * m)
    return q / (2 * m)


def best_bipartition(net):
    best = -1.0
    for bits in itertools.product([0, 1], repeat=net.n - 1):
        labels = (0,) + bits
        best = max(best, modularity_oracle(net, labels))
    return best


def pearson(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    xc, yc = x - x.mean(), y - y.mean()
    return float(xc @ yc / math.sqrt((xc @ xc) * (yc @ yc)))


# --- ingestion -------------------------------------------------------------


def test_load_simple():
    net = load_edge_list("a,b\nb,c")
    assert net.n == 3
    assert net.edges.tolist() == [[0, 1], [1, 2]]
    assert net.labels == ("a", "b", "c")


def test_load_duplicates_collapse():
    net = load_edge_list("a,b\na,b")
    assert (net.n, net.m) == (2, 1)


def test_load_self_loop_rejected():
    with pytest.raises(GraphError, match="self-loop"):
        load_edge_list("a,a")


def test_load_header_and_integer_ids():
    net = load_edge_list("source,target\n10,3\n3,7\n")
    assert net.labels == ("10", "3", "7")
    assert net.edges.tolist() == [[0, 1], [1, 2]]


def test_load_malformed_reports_line():
    with pytest.raises(GraphError, match="line 2"):
        load_edge_list("a,b\na,b,c\n")


def test_constructor_rejects_bad_indices():
    with pytest.raises(GraphError):
        net_of(2, [(0, 2)])
    with pytest.raises(GraphError):
        net_of(2, [(1, 1)])


@given(digraphs())
def test_neighbor_lookups_consistent(net):
    edges = set(map(tuple, net.edges.tolist()))
    for i in range(net.n):
        assert {(i, int(j)) for j in net.out_neighbors(i)} == {e for e in edges if e[0] == i}
        assert {(int(j), i) for j in net.in_neighbors(i)} == {e for e in edges if e[1] == i}


# --- components ------------------------------------------------------------


def test_giant_component_picks_larger():
    net = net_of(5, [(0, 1), (1, 2), (3, 4)])
    g = giant_component(net)
    assert g.n == 3 and g.m == 2


def test_giant_component_chain_unchanged():
    net = net_of(4, [(0, 1), (1, 2), (2, 3)])
    g = giant_component(net)
    assert g.n == 4 and g.edges.tolist() == net.edges.tolist()


def test_giant_component_star_vs_pair():
    net = net_of(6, [(0, 1), (0, 2), (0, 3), (4, 5), (5, 4)])
    g = giant_component(net)
    assert g.n == 4
    assert g.edges.tolist() == [[0, 1], [0, 2], [0, 3]]


def test_giant_component_tie_lowest_index():
    net = net_of(4, [(2, 3), (0, 1)])
    g = giant_component(DirectedNetwork(4, net.edges, ("a", "b", "c", "d")))
    assert g.labels == ("a", "b")


def test_giant_component_empty():
    with pytest.raises(GraphError):
        giant_component(DirectedNetwork(0, np.zeros((0, 2))))


@given(digraphs())
def test_giant_component_idempotent(net):
    g = giant_component(net)
    gg = giant_component(g)
    assert gg.n == g.n and gg.edges.tolist() == g.edges.tolist()


# --- statistics ------------------------------------------------------------


def test_density_case_study_counts():
    n, m = 634, 745
    assert m / (n * (n - 1)) == pytest.approx(0.001856, abs=5e-7)


def test_density_edge_cases():
    full = net_of(3, [(i, j) for i in range(3) for j in range(3) if i != j])
    assert density(full) == 1.0
    assert density(DirectedNetwork(5, np.zeros((0, 2)))) == 0.0
    with pytest.raises(GraphError):
        density(DirectedNetwork(1, np.zeros((0, 2))))


def test_degree_stats_two_cycle():
    d = degree_stats(net_of(2, [(0, 1), (1, 0)]))
    assert d == {"mean": 2.0, "sd": 0.0}


def test_degree_sd_is_population():
    net = net_of(3, [(0, 1), (0, 2)])
    assert degree_stats(net)["sd"] == pytest.approx(np.std([2, 1, 1]))


def test_transitivity_triangle_and_path():
    assert transitivity(net_of(3, [(0, 1), (1, 2), (2, 0)])) == pytest.approx(1.0)
    assert transitivity(net_of(3, [(0, 1), (1, 2)])) == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_transitivity_matches_triple_enumeration(seed):
    net = random_net(5, 0.35, seed)
    assert transitivity(net) == pytest.approx(transitivity_bruteforce(net), abs=1e-12)


def test_assortativity_cycle_undefined():
    with pytest.raises(UndefinedStatistic):
        assortativity(net_of(4, [(0, 1), (1, 2), (2, 3), (3, 0)]))


def test_assortativity_star():
    star = net_of(4, [(0, 1), (0, 2), (0, 3)])
    # direct Pearson over both orientations of each edge
    deg = {0: 3, 1: 1, 2: 1, 3: 1}
    pairs = [(deg[a], deg[b]) for a, b in [(0, 1), (0, 2), (0, 3)]]
    x = [p[0] for p in pairs] + [p[1] for p in pairs]
    y = [p[1] for p in pairs] + [p[0] for p in pairs]
    assert pearson(x, y) == pytest.approx(-1.0)
    assert assortativity(star) == pytest.approx(-1.0)


def test_assortativity_six_vertex_oracle():
    net = net_of(6, [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (1, 0)])
    nb = undirected_sets(net)
    und = {tuple(sorted(e)) for e in net.edges.tolist()}
    x, y = [], []
    for a, b in und:
        x += [len(nb[a]), len(nb[b])]
        y += [len(nb[b]), len(nb[a])]
    assert assortativity(net) == pytest.approx(pearson(x, y), abs=1e-12)


def test_average_distance_hand_cases():
    assert average_distance(net_of(3, [(0, 1), (1, 2)])) == pytest.approx(4 / 3)
    assert average_distance(net_of(2, [(0, 1), (1, 0)])) == 1.0
    with pytest.raises(UndefinedStatistic):
        average_distance(DirectedNetwork(3, np.zeros((0, 2))))


@pytest.mark.parametrize("seed", range(4))
def test_average_distance_floyd_warshall(seed):
    net = random_net(8, 0.2, seed)
    if net.m == 0:
        pytest.skip("empty draw")
    assert average_distance(net) == pytest.approx(floyd_warshall_mean(net), abs=1e-12)


# --- modularity / communities -------------------------------------------------

TWO_TRIANGLES = [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)]


def test_modularity_single_community_zero():
    net = random_net(7, 0.3, 1)
    assert modularity(net, np.zeros(7, int)) == pytest.approx(0.0, abs=1e-15)


def test_modularity_two_triangles():
    net = net_of(6, TWO_TRIANGLES)
    assert modularity(net, [0, 0, 0, 1, 1, 1]) == pytest.approx(0.5)
    assert modularity_oracle(net, [0, 0, 0, 1, 1, 1]) == pytest.approx(0.5)


@pytest.mark.parametrize("seed", range(5))
def test_modularity_matches_second_implementation(seed):
    rng = np.random.default_rng(seed)
    net = random_net(9, 0.25, seed)
    if net.m == 0:
        pytest.skip("empty draw")
    labels = rng.integers(0, 3, 9)
    assert modularity(net, labels) == pytest.approx(modularity_oracle(net, labels), abs=1e-12)


def test_fga_two_cliques():
    edges = [(i, j) for i in range(4) for j in range(4) if i < j]
    edges += [(i + 4, j + 4) for i, j in edges] + [(3, 4)]
    net = net_of(8, edges)
    res = fast_greedy_communities(net)
    lab = res["partition"].labels
    assert len(set(lab[:4])) == 1 and len(set(lab[4:])) == 1 and lab[0] != lab[4]
    assert res["modularity"] > 0.3
    assert res["modularity"] == pytest.approx(best_bipartition(net), abs=1e-12)


def test_fga_complete_graph_single_community():
    net = net_of(5, [(i, j) for i in range(5) for j in range(5) if i < j])
    res = fast_greedy_communities(net)
    assert res["partition"].k == 1
    assert res["modularity"] == pytest.approx(0.0, abs=1e-12)


def test_fga_two_triangles():
    net = net_of(6, TWO_TRIANGLES)
    res = fast_greedy_communities(net)
    assert res["partition"].k == 2
    assert res["modularity"] == pytest.approx(best_bipartition(net), abs=1e-12)
    assert res["modularity"] == pytest.approx(0.5)


@settings(max_examples=40, deadline=None)
@given(digraphs(max_n=9))
def test_invariants(net):
    assert 0.0 <= density(net) <= 1.0
    assert degree_stats(net)["mean"] == 2 * net.m / net.n
    assert 0.0 <= transitivity(net) <= 1.0
    assert modularity(net, np.zeros(net.n, int)) == pytest.approx(0.0, abs=1e-12)
    res = fast_greedy_communities(net)
    assert res["modularity"] <= 1.0
    assert res["modularity"] >= modularity(net, np.arange(net.n)) - 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 9), st.integers(0, 10_000))
def test_triangle_free_transitivity_zero(n, seed):
    # bipartite graphs have no triangles
    rng = np.random.default_rng(seed)
    half = n // 2
    edges = [(i, j) for i in range(half) for j in range(half, n) if rng.random() < 0.5]
    assert transitivity(net_of(n, edges)) == 0.0


def test_partition_validation():
    with pytest.raises(GraphError):
        Partition(np.array([0, 2]))
    assert Partition.from_any(["x", "y", "x"]).labels.tolist() == [0, 1, 0]


def test_describe_keys():
    d = describe(net_of(6, TWO_TRIANGLES))
    assert set(d) == {"density", "transitivity", "assortativity", "average_distance",
                      "average_degree", "degree_sd", "modularity"}
    assert d["assortativity"] is None
