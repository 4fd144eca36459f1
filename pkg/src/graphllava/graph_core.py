"""Undirected graphs in the GraphWiz textual format, exact task oracles and ER sampling."""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import EdgeOutOfRange, HamiltonTooLarge, MalformedEdge, MalformedHeader

HAMILTON_CAP = 20

_HEADER_RE = re.compile(r"The nodes are numbered from 0 to\s+([^\s,]+)\s*,")
_EDGES_INTRO_RE = re.compile(r"the edges are\s*:", re.IGNORECASE)
_EDGE_RE = re.compile(r"\(\s*([^,()]*?)\s*,\s*([^,()]*?)\s*\)")


def default_feature(i: int) -> str:
    return f"This is node {i}"


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph with textual node features.

    ``edges`` holds normalized pairs ``(u, v)`` with ``u < v``; construction
    validates the endpoints and fills missing features with the default
    ``"This is node {i}"`` sentence.
    """

    num_nodes: int
    edges: frozenset[tuple[int, int]] = frozenset()
    node_features: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        if self.num_nodes < 1:
            raise ValueError(f"num_nodes must be >= 1, got {self.num_nodes}")
        norm = set()
        for u, v in self.edges:
            u, v = int(u), int(v)
            if u == v:
                raise MalformedEdge(f"self-loop ({u}, {v}) is not allowed")
            if min(u, v) < 0 or max(u, v) >= self.num_nodes:
                raise EdgeOutOfRange(f"edge ({u}, {v}) outside 0..{self.num_nodes - 1}")
            norm.add((min(u, v), max(u, v)))
        object.__setattr__(self, "edges", frozenset(norm))
        if not self.node_features:
            feats = tuple(default_feature(i) for i in range(self.num_nodes))
        else:
            feats = tuple(self.node_features)
            if len(feats) != self.num_nodes:
                raise ValueError(f"expected {self.num_nodes} node features, got {len(feats)}")
        object.__setattr__(self, "node_features", feats)

    @property
    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def neighbors(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.num_nodes)]
        for u, v in self.sorted_edges:
            adj[u].append(v)
            adj[v].append(u)
        return adj

    def adjacency(self, dtype=np.float64) -> np.ndarray:
        a = np.zeros((self.num_nodes, self.num_nodes), dtype=dtype)
        for u, v in self.edges:
            a[u, v] = a[v, u] = 1
        return a

    def degrees(self) -> np.ndarray:
        d = np.zeros(self.num_nodes, dtype=np.int64)
        for u, v in self.edges:
            d[u] += 1
            d[v] += 1
        return d

    def relabel(self, perm: Sequence[int]) -> "Graph":
        """Return the graph with node ``i`` renamed ``perm[i]``; features travel with nodes."""
        perm = [int(p) for p in perm]
        if sorted(perm) != list(range(self.num_nodes)):
            raise ValueError("perm must be a permutation of range(num_nodes)")
        feats = [""] * self.num_nodes
        for old, new in enumerate(perm):
            feats[new] = self.node_features[old]
        edges = frozenset((perm[u], perm[v]) for u, v in self.edges)
        return Graph(self.num_nodes, edges, tuple(feats))

    def to_json(self) -> dict:
        out: dict = {"n": self.num_nodes, "edges": [list(e) for e in self.sorted_edges]}
        if self.node_features != tuple(default_feature(i) for i in range(self.num_nodes)):
            out["features"] = list(self.node_features)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Graph":
        edges = frozenset((int(e[0]), int(e[1])) for e in obj["edges"])
        return cls(int(obj["n"]), edges, tuple(obj.get("features") or ()))


class TaskType(str, Enum):
    CYCLE = "cycle"
    CONNECTIVITY = "connectivity"
    BIPARTITE = "bipartite"
    HAMILTON = "hamilton"


@dataclass(frozen=True)
class Task:
    type: TaskType
    u: int | None = None
    v: int | None = None

    @classmethod
    def cycle(cls) -> "Task":
        return cls(TaskType.CYCLE)

    @classmethod
    def connectivity(cls, u: int, v: int) -> "Task":
        return cls(TaskType.CONNECTIVITY, int(u), int(v))

    @classmethod
    def bipartite(cls) -> "Task":
        return cls(TaskType.BIPARTITE)

    @classmethod
    def hamilton(cls) -> "Task":
        return cls(TaskType.HAMILTON)

    def validate(self, g: Graph) -> None:
        if self.type is TaskType.CONNECTIVITY:
            if self.u is None or self.v is None:
                raise ValueError("connectivity task needs both endpoints")
            if not (0 <= self.u < g.num_nodes and 0 <= self.v < g.num_nodes):
                raise EdgeOutOfRange(f"endpoints ({self.u}, {self.v}) outside 0..{g.num_nodes - 1}")

    def relabel(self, perm: Sequence[int]) -> "Task":
        if self.type is TaskType.CONNECTIVITY:
            return Task(self.type, int(perm[self.u]), int(perm[self.v]))
        return self

    def to_json(self) -> dict:
        out: dict = {"type": self.type.value}
        if self.type is TaskType.CONNECTIVITY:
            out.update(u=self.u, v=self.v)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Task":
        t = TaskType(obj["type"])
        if t is TaskType.CONNECTIVITY:
            return cls(t, int(obj["u"]), int(obj["v"]))
        return cls(t)


# ---------------------------------------------------------------- text format


def render_description(g: Graph) -> str:
    body = " ".join(f"({u}, {v})" for u, v in g.sorted_edges)
    tail = f"{body} ." if body else "."
    return f"The nodes are numbered from 0 to {g.num_nodes - 1}, and the edges are: {tail}"


def parse_description(text: str) -> Graph:
    """Build a :class:`Graph` from a GraphWiz-style description.

    Trailing text after the edge list (e.g. the question) is ignored.
    """
    m = _HEADER_RE.search(text)
    if m is None:
        raise MalformedHeader("missing 'The nodes are numbered from 0 to N,' sentence")
    if not m.group(1).isdigit():
        raise MalformedHeader(f"node count {m.group(1)!r} is not a number")
    last = int(m.group(1))
    intro = _EDGES_INTRO_RE.search(text, m.end())
    edges: set[tuple[int, int]] = set()
    if intro is not None:
        pos = intro.end()
        while True:
            while pos < len(text) and text[pos].isspace():
                pos += 1
            if pos >= len(text) or text[pos] != "(":
                break
            em = _EDGE_RE.match(text, pos)
            if em is None:
                raise MalformedEdge(f"unparsable edge token at offset {pos}: {text[pos:pos + 20]!r}")
            a, b = em.group(1), em.group(2)
            if not (a.isdigit() and b.isdigit()):
                raise MalformedEdge(f"non-integer edge ({a}, {b})")
            u, v = int(a), int(b)
            if max(u, v) > last:
                raise EdgeOutOfRange(f"edge ({u}, {v}) exceeds node bound {last}")
            if u == v:
                raise MalformedEdge(f"self-loop ({u}, {v})")
            edges.add((min(u, v), max(u, v)))
            pos = em.end()
    return Graph(last + 1, frozenset(edges))


# ---------------------------------------------------------------- oracles


def has_cycle(g: Graph) -> bool:
    adj = g.neighbors()
    seen = [False] * g.num_nodes
    for root in range(g.num_nodes):
        if seen[root]:
            continue
        seen[root] = True
        stack = [(root, -1)]
        while stack:
            node, parent = stack.pop()
            for nxt in adj[node]:
                if nxt == parent:
                    continue
                if seen[nxt]:
                    return True  # back edge
                seen[nxt] = True
                stack.append((nxt, node))
    return False


def component_of(g: Graph, start: int, adj: list[list[int]] | None = None) -> set[int]:
    adj = adj if adj is not None else g.neighbors()
    seen = {start}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        for nxt in adj[node]:
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return seen


def connected(g: Graph, u: int, v: int) -> bool:
    return v in component_of(g, u)


def is_bipartite(g: Graph) -> bool:
    adj = g.neighbors()
    color = [-1] * g.num_nodes
    for root in range(g.num_nodes):
        if color[root] >= 0:
            continue
        color[root] = 0
        queue = deque([root])
        while queue:
            node = queue.popleft()
            for nxt in adj[node]:
                if color[nxt] < 0:
                    color[nxt] = 1 - color[node]
                    queue.append(nxt)
                elif color[nxt] == color[node]:
                    return False
    return True


def has_hamiltonian_path(g: Graph, cap: int = HAMILTON_CAP) -> bool:
    n = g.num_nodes
    if n > cap:
        raise HamiltonTooLarge(f"{n} nodes exceeds the hamilton cap of {cap}")
    if n == 1:
        return True
    deg = g.degrees()
    if (deg == 0).any() or int((deg == 1).sum()) > 2:
        return False
    adj = [0] * n
    for u, v in g.edges:
        adj[u] |= 1 << v
        adj[v] |= 1 << u
    full = (1 << n) - 1
    dead: set[tuple[int, int]] = set()

    def extend(node: int, mask: int) -> bool:
        if mask == full:
            return True
        if (node, mask) in dead:
            return False
        cand = adj[node] & ~mask
        while cand:
            low = cand & -cand
            nxt = low.bit_length() - 1
            if extend(nxt, mask | low):
                return True
            cand ^= low
        dead.add((node, mask))
        return False

    # a degree-1 vertex must be an endpoint; start there when one exists
    ones = [i for i in range(n) if deg[i] == 1]
    starts = ones[:1] if ones else range(n)
    return any(extend(s, 1 << s) for s in starts)


def oracle_answer(g: Graph, task: Task, hamilton_cap: int = HAMILTON_CAP) -> bool:
    task.validate(g)
    if task.type is TaskType.CYCLE:
        return has_cycle(g)
    if task.type is TaskType.CONNECTIVITY:
        return connected(g, task.u, task.v)
    if task.type is TaskType.BIPARTITE:
        return is_bipartite(g)
    return has_hamiltonian_path(g, hamilton_cap)


# ---------------------------------------------------------------- sampling / QA


def random_graph(num_nodes: int, edge_prob: float, seed: int | np.random.Generator) -> Graph:
    """Erdos-Renyi G(n, p) sample, deterministic for a fixed integer seed."""
    if num_nodes < 1:
        raise ValueError("num_nodes must be >= 1")
    if not 0.0 <= edge_prob <= 1.0:
        raise ValueError("edge_prob must lie in [0, 1]")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    iu, ju = np.triu_indices(num_nodes, k=1)
    keep = rng.random(iu.shape[0]) < edge_prob
    return Graph(num_nodes, frozenset(zip(iu[keep].tolist(), ju[keep].tolist())))


QUESTION_TEMPLATES = {
    TaskType.CYCLE: "Is there a cycle in this graph?",
    TaskType.CONNECTIVITY: "Is there a path between node {u} and node {v}?",
    TaskType.BIPARTITE: "Is this graph bipartite?",
    TaskType.HAMILTON: "Is there a path in this graph that visits every node exactly once?",
}

ANSWER_TEMPLATES = {
    (TaskType.CYCLE, True): "There is a cycle in this graph.",
    (TaskType.CYCLE, False): "There is no cycle in this graph.",
    (TaskType.CONNECTIVITY, True): "There is a path between node {u} and node {v}.",
    (TaskType.CONNECTIVITY, False): "There is no path between node {u} and node {v}.",
    (TaskType.BIPARTITE, True): "This graph is bipartite.",
    (TaskType.BIPARTITE, False): "This graph is not bipartite.",
    (TaskType.HAMILTON, True): "There is a path that visits every node exactly once.",
    (TaskType.HAMILTON, False): "There is no path that visits every node exactly once.",
}


def question_sentence(task: Task) -> str:
    return QUESTION_TEMPLATES[task.type].format(u=task.u, v=task.v)


def verdict_marker(answer: bool) -> str:
    return "### Yes." if answer else "### No."


def make_qa(g: Graph, task: Task, hamilton_cap: int = HAMILTON_CAP) -> tuple[str, str]:
    label = oracle_answer(g, task, hamilton_cap)
    question = f"{render_description(g)} {question_sentence(task)}"
    answer = ANSWER_TEMPLATES[(task.type, label)].format(u=task.u, v=task.v)
    return question, f"{answer} {verdict_marker(label)}"


def all_tasks_for(g: Graph) -> Iterable[Task]:
    """Every task instance on ``g`` (all connectivity pairs with u < v)."""
    yield Task.cycle()
    yield Task.bipartite()
    yield Task.hamilton()
    for u in range(g.num_nodes):
        for v in range(u + 1, g.num_nodes):
            yield Task.connectivity(u, v)
