"""Stage-1 (describe) and stage-2 (graph question) instruction datasets."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import SchemaError
from .graph_core import (
    HAMILTON_CAP,
    Graph,
    Task,
    TaskType,
    make_qa,
    oracle_answer,
    question_sentence,
    random_graph,
    render_description,
)
from .tokenizer import split_tokens

INSTRUCTIONS = (
    "Describe the graph concisely.",
    "Provide a brief description of the given graph.",
    "Offer a succinct explanation of the graph presented.",
    "Summarize the content of the graph.",
    "Give a short and clear explanation of the subsequent graph.",
    "Present a compact description of the graph key features.",
    "Render a clear and concise summary of the graph.",
    "Write a terse but informative summary of the graph.",
    "Create a compact narrative representing the graph presented.",
)

TOKEN_BUDGET = 512
BUCKET_WIDTH = 200
VERDICT_MARKER = "###"


@dataclass(frozen=True)
class InstructionSample:
    graph: Graph
    query: str
    answer: str
    task: Task | None  # None marks a stage-1 describe sample
    split: str = "train"
    desc_token_len: int = 0

    @property
    def is_describe(self) -> bool:
        return self.task is None

    def to_json(self) -> dict:
        return {
            "graph": self.graph.to_json(),
            "query": self.query,
            "answer": self.answer,
            "task": {"type": "describe"} if self.task is None else self.task.to_json(),
            "split": self.split,
            "desc_token_len": self.desc_token_len,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "InstructionSample":
        task_obj = obj["task"]
        task = None if task_obj["type"] == "describe" else Task.from_json(task_obj)
        return cls(
            graph=Graph.from_json(obj["graph"]),
            query=str(obj["query"]),
            answer=str(obj["answer"]),
            task=task,
            split=str(obj["split"]),
            desc_token_len=int(obj["desc_token_len"]),
        )


def description_length(g: Graph) -> int:
    return len(split_tokens(render_description(g)))


def bucket_of(n_tokens: int, width: int = BUCKET_WIDTH) -> int:
    """Lower edge of the half-open ``[k*width, (k+1)*width)`` bucket."""
    return (n_tokens // width) * width


def sample_instruction(rng: np.random.Generator) -> str:
    return INSTRUCTIONS[int(rng.integers(len(INSTRUCTIONS)))]


def crop_pair(q: Sequence, a: Sequence, budget: int = TOKEN_BUDGET, marker=VERDICT_MARKER) -> tuple[list, list]:
    """Fit ``q + a`` into ``budget`` tokens.

    An oversized answer collapses to its verdict tail (from the last ``marker``);
    if that is still too long the query is cut from the right, then the tail itself.
    """
    q, a = list(q), list(a)
    if len(q) + len(a) <= budget:
        return q, a
    hits = [i for i, t in enumerate(a) if t == marker]
    if hits:
        a = a[hits[-1]:]
    if len(q) + len(a) > budget:
        q = q[: max(budget - len(a), 0)]
    if len(q) + len(a) > budget:
        a = a[:budget]
    return q, a


def _crop_text(query: str, answer: str, budget: int) -> tuple[str, str]:
    qt, at = split_tokens(query), split_tokens(answer)
    if len(qt) + len(at) <= budget:
        return query, answer
    qc, ac = crop_pair(qt, at, budget)
    return " ".join(qc), " ".join(ac)


def build_stage1(graphs: Iterable[Graph], rng: np.random.Generator, budget: int = TOKEN_BUDGET) -> list[InstructionSample]:
    out = []
    for g in graphs:
        desc = render_description(g)
        q, a = _crop_text(sample_instruction(rng), desc, budget)
        out.append(InstructionSample(g, q, a, None, "train", description_length(g)))
    return out


def draw_task(g: Graph, kind: TaskType, rng: np.random.Generator) -> Task:
    if kind is TaskType.CONNECTIVITY:
        if g.num_nodes < 2:
            raise ValueError("connectivity needs at least two nodes")
        u, v = rng.choice(g.num_nodes, size=2, replace=False)
        return Task.connectivity(int(u), int(v))
    return Task(kind)


def stage2_sample(g: Graph, task: Task, budget: int = TOKEN_BUDGET, hamilton_cap: int = HAMILTON_CAP) -> InstructionSample:
    _, answer = make_qa(g, task, hamilton_cap)
    q, a = _crop_text(question_sentence(task), answer, budget)
    return InstructionSample(g, q, a, task, "train", description_length(g))


def build_stage2(
    graphs: Iterable[Graph],
    tasks: Mapping[TaskType, float] | Sequence[TaskType],
    rng: np.random.Generator,
    budget: int = TOKEN_BUDGET,
    hamilton_cap: int = HAMILTON_CAP,
) -> list[InstructionSample]:
    """One question per graph; the task type is drawn from ``tasks`` (weights or a uniform list)."""
    kinds, probs = _task_distribution(tasks)
    out = []
    for g in graphs:
        kind = kinds[int(rng.choice(len(kinds), p=probs))]
        out.append(stage2_sample(g, draw_task(g, kind, rng), budget, hamilton_cap))
    return out


def _task_distribution(tasks) -> tuple[list[TaskType], np.ndarray]:
    if isinstance(tasks, Mapping):
        kinds = [TaskType(k) for k in tasks]
        w = np.asarray([float(tasks[k]) for k in tasks])
    else:
        kinds = [TaskType(k) for k in tasks]
        w = np.ones(len(kinds))
    if not kinds or w.sum() <= 0:
        raise ValueError("empty task distribution")
    return kinds, w / w.sum()


def verdict_of(answer: str) -> bool | None:
    tail = answer.rsplit(VERDICT_MARKER, 1)
    if len(tail) < 2:
        return None
    words = split_tokens(tail[1].lower())
    if words[:1] == ["yes"]:
        return True
    if words[:1] == ["no"]:
        return False
    return None


# ---------------------------------------------------------------- label-balanced ER generation


def yes_rate(kind: TaskType, n: int, p: float, rng: np.random.Generator, trials: int = 200) -> float:
    hits = 0
    for _ in range(trials):
        g = random_graph(n, p, rng)
        hits += oracle_answer(g, draw_task(g, kind, rng))
    return hits / trials


@lru_cache(maxsize=None)
def calibrate_edge_prob(kind: TaskType, n: int, seed: int = 0, trials: int = 200, iters: int = 12) -> float:
    """Edge probability at which G(n, p) answers ``kind`` with 'yes' about half the time."""
    rng = np.random.default_rng([seed, n, list(TaskType).index(kind)])
    increasing = kind is not TaskType.BIPARTITE
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        r = yes_rate(kind, n, mid, rng, trials)
        if (r < 0.5) == increasing:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def generate_graphs(
    count: int,
    node_range: tuple[int, int],
    rng: np.random.Generator,
    tasks: Sequence[TaskType],
    edge_prob: float | None = None,
    calib_seed: int = 0,
) -> list[tuple[Graph, TaskType]]:
    """Sample (graph, task kind) pairs; ``edge_prob=None`` picks the label-balancing p per (task, n)."""
    out = []
    for _ in range(count):
        kind = tasks[int(rng.integers(len(tasks)))]
        hi = node_range[1]
        if kind is TaskType.HAMILTON:
            hi = min(hi, HAMILTON_CAP)
        lo = 2 if kind is TaskType.CONNECTIVITY else 1
        n = int(rng.integers(max(node_range[0], lo), max(hi, max(node_range[0], lo)) + 1))
        p = edge_prob if edge_prob is not None else calibrate_edge_prob(kind, n, calib_seed)
        out.append((random_graph(n, p, rng), kind))
    return out


def assign_splits(samples: list[InstructionSample], test_frac: float, rng: np.random.Generator,
                  width: int = BUCKET_WIDTH) -> list[str]:
    """Stratified train/test labels by (task type, description bucket)."""
    strata: dict[tuple, list[int]] = {}
    for i, s in enumerate(samples):
        key = ("describe" if s.task is None else s.task.type.value, bucket_of(s.desc_token_len, width))
        strata.setdefault(key, []).append(i)
    labels = ["train"] * len(samples)
    for key in sorted(strata):
        idx = strata[key]
        perm = rng.permutation(len(idx))
        n_test = int(round(test_frac * len(idx)))
        for j in perm[:n_test]:
            labels[idx[j]] = "test"
    return labels


def with_split(s: InstructionSample, split: str) -> InstructionSample:
    return InstructionSample(s.graph, s.query, s.answer, s.task, split, s.desc_token_len)


# ---------------------------------------------------------------- JSONL io


def save_dataset(samples: Iterable[InstructionSample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_json(), sort_keys=True) + "\n")


def load_dataset(path: str | Path) -> list[InstructionSample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc.msg}", lineno) from exc
            if not isinstance(obj, dict):
                raise SchemaError("expected a JSON object", lineno)
            missing = {"graph", "query", "answer", "task", "split", "desc_token_len"} - obj.keys()
            if missing:
                raise SchemaError(f"missing fields {sorted(missing)}", lineno)
            try:
                out.append(InstructionSample.from_json(obj))
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaError(f"bad sample: {exc}", lineno) from exc
    return out


def label_balance(samples: Iterable[InstructionSample]) -> dict[str, tuple[int, int]]:
    """Per task type: (yes count, total)."""
    out: dict[str, list[int]] = {}
    for s in samples:
        if s.task is None:
            continue
        v = verdict_of(s.answer)
        rec = out.setdefault(s.task.type.value, [0, 0])
        rec[0] += int(bool(v))
        rec[1] += 1
    return {k: (a, b) for k, (a, b) in sorted(out.items())}
