"""The brute-force enumerator is itself checked against known labelled-graph counts."""

import numpy as np

from graphllava.verify import brute_force_labels, graph_from_mask, sweep


def test_counts_match_known_sequences():
    # labelled forests on 4 nodes: 38 -> 64 - 38 graphs have a cycle
    assert int(brute_force_labels(4)[("cycle",)].sum()) == 64 - 38
    # labelled bipartite graphs: 1, 2, 7, 41, 376 (OEIS A047864)
    for n, count in zip(range(1, 6), (1, 2, 7, 41, 376)):
        assert int(brute_force_labels(n)[("bipartite",)].sum()) == count
    # labelled connected graphs on 4 nodes: 38 (each is connected iff 0 reaches 1, 2 and 3)
    lab = brute_force_labels(4)
    conn = lab[("connectivity", 0, 1)] & lab[("connectivity", 0, 2)] & lab[("connectivity", 0, 3)]
    assert int(conn.sum()) == 38
    # on 3 nodes, traceable graphs are the three paths and the triangle
    assert int(brute_force_labels(3)[("hamilton",)].sum()) == 4


def test_graph_from_mask_bits():
    g = graph_from_mask(3, 0b101)
    assert g.edges == {(0, 1), (1, 2)}
    assert graph_from_mask(4, 0).edges == frozenset()


def test_small_sweep_agrees():
    res = sweep(4)
    assert res.ok, res.first_mismatch
    assert res.graphs == 1 + 2 + 8 + 64


def test_label_vectors_are_boolean():
    for col in brute_force_labels(3).values():
        assert col.dtype == np.bool_
