"""Hypothesis strategies shared by the test modules."""

from itertools import combinations

from hypothesis import strategies as st

from graphllava.graph_core import Graph


@st.composite
def graphs(draw, min_nodes=1, max_nodes=9):
    n = draw(st.integers(min_nodes, max_nodes))
    pairs = list(combinations(range(n), 2))
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs))) if pairs else []
    return Graph(n, frozenset(chosen))


@st.composite
def graph_and_perm(draw, min_nodes=1, max_nodes=9):
    g = draw(graphs(min_nodes, max_nodes))
    perm = draw(st.permutations(list(range(g.num_nodes))))
    return g, perm
