"""Exhaustive enumeration checks for the task oracles on small graphs.

Every labelled graph on ``n`` nodes is an edge bitmask over the pairs of
``range(n)``. Each property is decided by brute force: a graph has a cycle iff
it contains the edge set of some simple cycle of K_n, is bipartite iff its
edges all cross some 2-colouring, and so on. The checks are vectorized over
all ``2**(n*(n-1)/2)`` masks at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, permutations

import numpy as np

from .graph_core import Graph, Task, TaskType, oracle_answer


def _pairs(n: int) -> list[tuple[int, int]]:
    return list(combinations(range(n), 2))


def _mask_of(edges, index: dict[tuple[int, int], int]) -> int:
    m = 0
    for u, v in edges:
        m |= 1 << index[(min(u, v), max(u, v))]
    return m


def _contains_any(masks: np.ndarray, patterns: set[int]) -> np.ndarray:
    out = np.zeros(masks.shape, dtype=bool)
    for p in patterns:
        out |= (masks & p) == p
    return out


def cycle_patterns(n: int) -> set[int]:
    index = {p: i for i, p in enumerate(_pairs(n))}
    found = set()
    for k in range(3, n + 1):
        for seq in permutations(range(n), k):
            ring = list(zip(seq, seq[1:] + seq[:1]))
            found.add(_mask_of(ring, index))
    return found


def path_patterns(n: int, u: int, v: int) -> set[int]:
    index = {p: i for i, p in enumerate(_pairs(n))}
    inner = [x for x in range(n) if x not in (u, v)]
    found = set()
    for k in range(len(inner) + 1):
        for mid in permutations(inner, k):
            seq = (u, *mid, v)
            found.add(_mask_of(zip(seq, seq[1:]), index))
    return found


def hamilton_patterns(n: int) -> set[int]:
    index = {p: i for i, p in enumerate(_pairs(n))}
    return {_mask_of(zip(seq, seq[1:]), index) for seq in permutations(range(n))}


def bipartite_patterns(n: int) -> set[int]:
    """Crossing-edge masks of every 2-colouring (node 0 fixed to colour 0)."""
    pairs = _pairs(n)
    found = set()
    for bits in range(1 << max(n - 1, 0)):
        colour = [0] + [(bits >> i) & 1 for i in range(n - 1)]
        found.add(sum(1 << i for i, (a, b) in enumerate(pairs) if colour[a] != colour[b]))
    return found


def brute_force_labels(n: int) -> dict[tuple, np.ndarray]:
    """Map each task key to a boolean vector over all edge masks on ``n`` nodes."""
    m = len(_pairs(n))
    masks = np.arange(1 << m, dtype=np.int64)
    out: dict[tuple, np.ndarray] = {
        ("cycle",): _contains_any(masks, cycle_patterns(n)),
        ("hamilton",): _contains_any(masks, hamilton_patterns(n)) if n > 1 else np.ones(1, bool),
    }
    # a mask is bipartite iff it is a subset of some crossing set
    bip = np.zeros(masks.shape, dtype=bool)
    for p in bipartite_patterns(n):
        bip |= (masks & ~p) == 0
    out[("bipartite",)] = bip
    for u, v in _pairs(n):
        out[("connectivity", u, v)] = _contains_any(masks, path_patterns(n, u, v))
    return out


def graph_from_mask(n: int, mask: int) -> Graph:
    pairs = _pairs(n)
    return Graph(n, frozenset(p for i, p in enumerate(pairs) if (mask >> i) & 1))


@dataclass
class OracleSweepResult:
    graphs: int = 0
    checks: int = 0
    mismatches: int = 0
    first_mismatch: str | None = None

    @property
    def ok(self) -> bool:
        return self.mismatches == 0


def sweep(max_nodes: int = 6) -> OracleSweepResult:
    """Compare :func:`oracle_answer` with brute force on every graph up to ``max_nodes``."""
    res = OracleSweepResult()
    for n in range(1, max_nodes + 1):
        truth = brute_force_labels(n)
        for mask in range(1 << len(_pairs(n))):
            g = graph_from_mask(n, mask)
            res.graphs += 1
            for key, col in truth.items():
                if key[0] == "connectivity":
                    task = Task(TaskType.CONNECTIVITY, key[1], key[2])
                else:
                    task = Task(TaskType(key[0]))
                res.checks += 1
                if oracle_answer(g, task) != bool(col[mask]):
                    res.mismatches += 1
                    if res.first_mismatch is None:
                        res.first_mismatch = f"n={n} mask={mask} task={key}"
    return res
