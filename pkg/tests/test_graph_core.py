import json

import pytest
from hypothesis import given, strategies as st

from graphllava.errors import EdgeOutOfRange, HamiltonTooLarge, MalformedEdge, MalformedHeader
from graphllava.graph_core import (
    Graph,
    Task,
    TaskType,
    all_tasks_for,
    has_cycle,
    has_hamiltonian_path,
    is_bipartite,
    make_qa,
    oracle_answer,
    parse_description,
    random_graph,
    render_description,
)
from strategies import graph_and_perm, graphs


def path(n):
    return Graph(n, frozenset((i, i + 1) for i in range(n - 1)))


def cycle(n):
    return Graph(n, frozenset({(i, (i + 1) % n) for i in range(n)}))


# ---------------------------------------------------------------- text format


def test_parse_eight_node_example(eight_node):
    assert eight_node.num_nodes == 8
    assert len(eight_node.edges) == 15
    assert (0, 6) in eight_node.edges and (6, 7) in eight_node.edges


def test_parse_forty_five_node_example(forty_five_node):
    assert forty_five_node.num_nodes == 45
    assert len(forty_five_node.edges) == 57


def test_parse_empty_edge_list():
    g = parse_description("The nodes are numbered from 0 to 1, and the edges are: .")
    assert g.num_nodes == 2 and g.edges == frozenset()


def test_render_empty_and_sorted():
    assert render_description(Graph(2)) == "The nodes are numbered from 0 to 1, and the edges are: ."
    g = Graph(3, frozenset({(2, 1), (0, 1)}))
    assert render_description(g).endswith("edges are: (0, 1) (1, 2) .")


def test_parse_ignores_trailing_question():
    g = parse_description("The nodes are numbered from 0 to 2, and the edges are: (0, 1) (1, 2). Is there a cycle?")
    assert g.edges == {(0, 1), (1, 2)}


def test_parse_tolerates_spacing():
    g = parse_description("The nodes are numbered from 0 to 3, and the edges are:(0,3) ( 1 , 2 ).")
    assert g.edges == {(0, 3), (1, 2)}


@pytest.mark.parametrize(
    "text, err",
    [
        ("no header here (0, 1)", MalformedHeader),
        ("The nodes are numbered from 0 to x, and the edges are: .", MalformedHeader),
        ("The nodes are numbered from 0 to 2, and the edges are: (0, 3) .", EdgeOutOfRange),
        ("The nodes are numbered from 0 to 2, and the edges are: (0, a) .", MalformedEdge),
        ("The nodes are numbered from 0 to 2, and the edges are: (0 1) .", MalformedEdge),
        ("The nodes are numbered from 0 to 2, and the edges are: (1, 1) .", MalformedEdge),
    ],
)
def test_parse_errors(text, err):
    with pytest.raises(err):
        parse_description(text)


@given(graphs(max_nodes=12))
def test_parse_render_roundtrip(g):
    assert parse_description(render_description(g)) == g


def test_graph_validation():
    with pytest.raises(EdgeOutOfRange):
        Graph(2, frozenset({(0, 2)}))
    with pytest.raises(MalformedEdge):
        Graph(2, frozenset({(1, 1)}))
    with pytest.raises(ValueError):
        Graph(0)
    assert Graph(3, frozenset({(2, 0)})).edges == {(0, 2)}


@given(graphs())
def test_graph_json_roundtrip(g):
    assert Graph.from_json(json.loads(json.dumps(g.to_json()))) == g


def test_custom_features_survive_json():
    g = Graph(2, frozenset({(0, 1)}), ("red", "blue"))
    assert Graph.from_json(g.to_json()).node_features == ("red", "blue")


# ---------------------------------------------------------------- oracles


def test_eight_node_has_cycle(eight_node):
    assert oracle_answer(eight_node, Task.cycle()) is True


def test_forty_five_node_not_connected_28_11(forty_five_node):
    assert oracle_answer(forty_five_node, Task.connectivity(28, 11)) is False


def test_small_oracle_cases():
    k3 = cycle(3)
    assert oracle_answer(k3, Task.bipartite()) is False
    assert oracle_answer(path(3), Task.hamilton()) is True
    assert oracle_answer(cycle(4), Task.bipartite()) is True
    assert has_cycle(path(5)) is False and has_cycle(cycle(5)) is True
    assert oracle_answer(Graph(3, frozenset({(0, 1)})), Task.connectivity(0, 2)) is False
    assert oracle_answer(Graph(1), Task.hamilton()) is True
    star = Graph(4, frozenset({(0, 1), (0, 2), (0, 3)}))
    assert has_hamiltonian_path(star) is False


def test_hamilton_cap():
    with pytest.raises(HamiltonTooLarge):
        oracle_answer(path(21), Task.hamilton())
    assert oracle_answer(path(21), Task.hamilton(), hamilton_cap=25) is True


def test_connectivity_endpoint_validation():
    with pytest.raises(EdgeOutOfRange):
        oracle_answer(Graph(3), Task.connectivity(0, 5))


@given(graph_and_perm(max_nodes=8))
def test_oracles_invariant_under_relabeling(gp):
    g, perm = gp
    h = g.relabel(perm)
    for task in all_tasks_for(g):
        assert oracle_answer(g, task) == oracle_answer(h, task.relabel(perm))


@given(graphs())
def test_non_bipartite_implies_cycle(g):
    if not is_bipartite(g):
        assert has_cycle(g)


@given(graphs())
def test_hamilton_implies_connected(g):
    if g.num_nodes > 1 and has_hamiltonian_path(g):
        assert all(oracle_answer(g, Task.connectivity(0, v)) for v in range(1, g.num_nodes))


# ---------------------------------------------------------------- generation / QA


def test_random_graph_extremes_and_determinism():
    assert len(random_graph(5, 0.0, 3).edges) == 0
    assert len(random_graph(5, 1.0, 3).edges) == 10
    assert random_graph(9, 0.4, 11) == random_graph(9, 0.4, 11)
    with pytest.raises(ValueError):
        random_graph(4, 1.5, 0)


def test_make_qa_examples(eight_node, forty_five_node):
    q, a = make_qa(eight_node, Task.cycle())
    assert q.startswith(render_description(eight_node))
    assert "Is there a cycle in this graph?" in q
    assert a == "There is a cycle in this graph. ### Yes."
    q, a = make_qa(forty_five_node, Task.connectivity(28, 11))
    assert "Is there a path between node 28 and node 11?" in q
    assert a == "There is no path between node 28 and node 11. ### No."


@given(graphs(), st.sampled_from(list(TaskType)))
def test_make_qa_verdict_matches_oracle(g, kind):
    task = Task.connectivity(0, g.num_nodes - 1) if kind is TaskType.CONNECTIVITY else Task(kind)
    _, a = make_qa(g, task)
    assert a.endswith("### Yes." if oracle_answer(g, task) else "### No.")
