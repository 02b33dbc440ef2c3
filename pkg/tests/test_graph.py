import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from engagepred.corpus import CommentRecord, CommunityCorpus, SubmissionRecord
from engagepred.graph import (
    NETWORK_FEATURES,
    ReplyGraph,
    build_reply_graph,
    centrality_profiles,
    cohesion_stats,
    component_stats,
    count_triangles,
    network_feature_vector,
    node_connectivity,
    write_edge_list,
)


def reciprocal(pairs):
    return [(a, b) for a, b in pairs] + [(b, a) for a, b in pairs]


def _corpus(subs, comments):
    return CommunityCorpus("c", tuple(subs), tuple(comments), None, (0, 10**10))


def _sub(id, author):
    return SubmissionRecord(id, "c", author, "t", "", 1, 100)


def _com(id, author, parent):
    return CommentRecord(id, "c", author, "x", 1, 200, parent, "t3_s1")


class TestBuildReplyGraph:
    def test_comment_on_submission(self):
        g = build_reply_graph(_corpus([_sub("s1", "v")], [_com("c1", "u", "t3_s1")]))
        assert g.edges == {("u", "v"): 1}

    def test_empty(self):
        g = build_reply_graph(_corpus([], []))
        assert g.n == 0 and len(g.edges) == 0

    def test_weights_aggregate(self):
        g = build_reply_graph(_corpus(
            [_sub("s1", "v")],
            [_com("c1", "u", "t3_s1"), _com("c2", "u", "t3_s1")]))
        assert g.edges == {("u", "v"): 2}

    def test_self_replies_deleted_and_unresolved(self):
        g = build_reply_graph(_corpus(
            [_sub("s1", "v"), _sub("s2", "[deleted]")],
            [_com("c1", "v", "t3_s1"),            # self reply
             _com("c2", "u", "t3_s2"),            # to deleted author
             _com("c3", "[deleted]", "t3_s1"),    # by deleted author
             _com("c4", "w", "t1_c1"),            # reply to a comment
             _com("c5", "w", "t3_missing")]))     # unresolved
        assert g.edges == {("w", "v"): 1}
        assert g.unresolved == 1
        assert set(g.nodes) == {"u", "v", "w"}


class TestCentrality:
    def test_path_betweenness(self):
        g = ReplyGraph.from_edges([("a", "b"), ("b", "c")])
        p = centrality_profiles(g)
        assert p.betweenness.tolist() == [0.0, 1.0, 0.0]

    def test_star_closeness(self):
        g = ReplyGraph.from_edges(reciprocal([("v", f"l{i}") for i in range(4)]))
        p = centrality_profiles(g)
        assert p.closeness[g.index()["v"]] == pytest.approx(1.0)

    def test_isolated_node(self):
        g = ReplyGraph.from_edges([("a", "b")], nodes=["z"])
        p = centrality_profiles(g)
        z = g.index()["z"]
        assert [p.betweenness[z], p.centrality[z], p.closeness[z], p.in_degree[z]] == [0, 0, 0, 0]

    def test_in_degree_weighted_and_unweighted(self):
        g = ReplyGraph.from_edges({("a", "b"): 3, ("c", "b"): 1})
        b = g.index()["b"]
        assert centrality_profiles(g).in_degree[b] == 4
        assert centrality_profiles(g, weighted_in_degree=False).in_degree[b] == 2

    def test_degree_centrality(self):
        g = ReplyGraph.from_edges(reciprocal([("a", "b")]) + [("a", "c")])
        p = centrality_profiles(g)
        # a: out {b, c}, in {b} -> 3 / 2
        assert p.centrality[g.index()["a"]] == pytest.approx(1.5)

    def test_sampled_mode_is_deterministic(self):
        rng = np.random.default_rng(1)
        nodes, edges = oracles.random_digraph(rng, 8)
        g = ReplyGraph.from_edges(edges, nodes=nodes + ["x0", "x1"])
        a = centrality_profiles(g, exact_limit=3, pivots=4, seed=5)
        b = centrality_profiles(g, exact_limit=3, pivots=4, seed=5)
        assert a.approximate
        np.testing.assert_array_equal(a.betweenness, b.betweenness)

    def test_sampled_with_all_pivots_equals_exact(self):
        rng = np.random.default_rng(3)
        nodes, edges = oracles.random_digraph(rng, 8)
        g = ReplyGraph.from_edges(edges, nodes=nodes)
        exact = centrality_profiles(g)
        sampled = centrality_profiles(g, exact_limit=0, pivots=g.n)
        np.testing.assert_allclose(sampled.betweenness, exact.betweenness)


class TestComponents:
    def test_two_reciprocal_pairs(self):
        g = ReplyGraph.from_edges(reciprocal([("a", "b"), ("c", "d")]))
        s = component_stats(g)
        assert s["num_connected_components"] == 2
        assert s["max_connected_component"] == 2
        assert s["num_connected_components_gt2"] == 0

    def test_directed_cycle(self):
        g = ReplyGraph.from_edges([("a", "b"), ("b", "c"), ("c", "a")])
        s = component_stats(g)
        assert s["num_strongly_connected_components"] == 1
        assert s["max_strongly_connected_component"] == 3

    def test_empty(self):
        assert set(component_stats(ReplyGraph.from_edges([])).values()) == {0}


class TestCohesion:
    def test_triangle(self):
        g = ReplyGraph.from_edges(reciprocal([("a", "b"), ("b", "c"), ("a", "c")]))
        c = cohesion_stats(g)
        assert c["num_triangles"] == 1 and c["is_biconnected"] == 1
        assert c["num_nodes_to_cut"] == 0  # complete

    def test_path_of_three(self):
        g = ReplyGraph.from_edges([("a", "b"), ("b", "c")])
        c = cohesion_stats(g)
        assert c["num_nodes_to_cut"] == 1 and c["is_biconnected"] == 0

    def test_four_clique(self):
        g = ReplyGraph.from_edges([(a, b) for a, b in itertools.permutations("abcd", 2)])
        assert count_triangles(g) == 4

    def test_cycle_connectivity(self):
        nbrs = {i: {(i - 1) % 6, (i + 1) % 6} for i in range(6)}
        assert node_connectivity(nbrs) == 2

    def test_capped_component_reports_lower_bound(self):
        g = ReplyGraph.from_edges(reciprocal([(i, (i + 1) % 6) for i in range(6)]))
        c = cohesion_stats(g, cut_limit=3)
        assert c["capped"] and c["num_nodes_to_cut"] == 2 and c["is_biconnected"] == 1

    def test_density(self):
        g = ReplyGraph.from_edges(reciprocal([("a", "b")]))
        assert cohesion_stats(g)["density"] == 1.0


class TestNetworkVector:
    def test_empty_graph_zeros(self):
        v = network_feature_vector(ReplyGraph.from_edges([]))
        assert v.values.shape == (32,) and not v.values.any()

    def test_reciprocal_pair(self):
        d = network_feature_vector(ReplyGraph.from_edges(reciprocal([("a", "b")]))).as_dict()
        assert (d["num_nodes"], d["num_edges"], d["density"]) == (2, 2, 1.0)

    def test_names(self):
        assert len(NETWORK_FEATURES) == len(set(NETWORK_FEATURES)) == 32
        assert NETWORK_FEATURES[:3] == ("num_nodes", "num_triangles", "num_edges")
        assert NETWORK_FEATURES[12:17] == ("avg_betweenness", "max_betweenness", "min_betweenness",
                                           "median_betweenness", "std_betweenness")


graphs = st.integers(0, 2**32 - 1).map(lambda s: oracles.random_digraph(np.random.default_rng(s), 7))


@settings(max_examples=60, deadline=None)
@given(graphs)
def test_against_brute_force(graph):
    nodes, edges = graph
    g = ReplyGraph.from_edges(edges, nodes=nodes)
    idx = g.index()
    p = centrality_profiles(g)
    bc = oracles.betweenness(nodes, edges)
    cl = oracles.closeness(nodes, edges)
    for v in nodes:
        assert p.betweenness[idx[v]] == pytest.approx(bc[v], abs=1e-9)
        assert p.closeness[idx[v]] == pytest.approx(cl[v], abs=1e-9)
    assert count_triangles(g) == oracles.triangles(nodes, edges)
    cs = component_stats(g)
    weak = oracles.weak_components(nodes, edges)
    strong = oracles.strong_components(nodes, edges)
    assert cs["num_connected_components"] == len(weak)
    assert cs["num_strongly_connected_components"] == len(strong)
    assert cs["max_strongly_connected_component"] == max((len(c) for c in strong), default=0)
    coh = cohesion_stats(g)
    assert (coh["is_biconnected"], coh["num_nodes_to_cut"]) == oracles.largest_component_cut(nodes, edges)


@settings(max_examples=40, deadline=None)
@given(graphs, st.randoms(use_true_random=False))
def test_isomorphism_invariance(graph, rnd):
    nodes, edges = graph
    perm = list(nodes)
    rnd.shuffle(perm)
    rename = dict(zip(nodes, [f"z{p}" for p in perm]))
    a = network_feature_vector(ReplyGraph.from_edges(edges, nodes=nodes))
    b = network_feature_vector(ReplyGraph.from_edges([(rename[u], rename[v]) for u, v in edges],
                                                     nodes=rename.values()))
    np.testing.assert_allclose(a.values, b.values, rtol=0, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(graphs, st.data())
def test_adding_an_edge_is_monotone(graph, data):
    nodes, edges = graph
    if len(nodes) < 2:
        return
    u = data.draw(st.sampled_from(nodes))
    v = data.draw(st.sampled_from([x for x in nodes if x != u]))
    before = network_feature_vector(ReplyGraph.from_edges(edges, nodes=nodes)).as_dict()
    after = network_feature_vector(ReplyGraph.from_edges(edges + [(u, v)], nodes=nodes)).as_dict()
    assert after["num_edges"] >= before["num_edges"]
    assert after["num_triangles"] >= before["num_triangles"]
    assert after["num_connected_components"] <= before["num_connected_components"]


@settings(max_examples=30, deadline=None)
@given(graphs)
def test_order_statistics(graph):
    nodes, edges = graph
    d = network_feature_vector(ReplyGraph.from_edges(edges, nodes=nodes)).as_dict()
    for metric in ("betweenness", "centrality", "closeness", "in_degree"):
        assert d[f"min_{metric}"] <= d[f"median_{metric}"] <= d[f"max_{metric}"]
    assert d["is_biconnected"] in (0, 1)


def test_edge_list_export(tmp_path):
    g = ReplyGraph.from_edges({("a", "b"): 2, ("b", "a"): 1})
    write_edge_list(tmp_path / "e.csv", g)
    assert (tmp_path / "e.csv").read_text() == "u,v,weight\na,b,2\nb,a,1\n"
