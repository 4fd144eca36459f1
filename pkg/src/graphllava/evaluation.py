"""Yes/no accuracy with description-length buckets, baselines, and the pairwise judge protocol."""

from __future__ import annotations

import csv
import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .datasets import BUCKET_WIDTH, InstructionSample, verdict_of
from .errors import AllInvalid
from .graph_core import render_description
from .model import DEFAULT_SYSTEM, AssembledInput, ModelParams, assemble, generate, graph_tokens
from .pipeline import text_mode_query
from .tokenizer import Vocab

BUCKET_EDGES = tuple(range(0, 1601, BUCKET_WIDTH))

JUDGE_SYSTEM = (
    "You are an expert on graphs. You will have a query that is a question on graphs, a ground truth "
    "that is the expected answer and two answers coming from user1 and user2. You will have to choose "
    "which one is as good as the ground truth. Please answer only with the words 'user1' or 'user2' or 'none'"
)
JUDGE_USER = "The query is {query}. The ground truth is: {truth}. user1's answer is {user1}. user2's answer is {user2}."

_YES_NO = re.compile(r"\b(yes|no)\b", re.IGNORECASE)
_JUDGE = re.compile(r"\b(user1|user2|none)\b", re.IGNORECASE)


class Verdict(str, Enum):
    YES = "Yes"
    NO = "No"
    UNPARSABLE = "Unparsable"


class Mode(str, Enum):
    GRAPH = "graph"
    TEXT = "text"
    RANDOM = "random"


class Choice(str, Enum):
    MODEL_A = "model_a"
    MODEL_B = "model_b"
    NEITHER = "neither"
    INVALID = "invalid"


def classify_yes_no(answer: str) -> Verdict:
    text = answer.rsplit("###", 1)[1] if "###" in answer else answer
    m = _YES_NO.search(text)
    if m is None:
        return Verdict.UNPARSABLE
    return Verdict.YES if m.group(1).lower() == "yes" else Verdict.NO


def bucket_label(n_tokens: int, edges: Sequence[int] = BUCKET_EDGES) -> str:
    """Half-open buckets ``[e_i, e_{i+1})``; everything past the last edge shares one open bucket."""
    for lo, hi in zip(edges, edges[1:]):
        if lo <= n_tokens < hi:
            return f"{lo}-{hi}"
    return f"{edges[-1]}+"


def bucket_labels(edges: Sequence[int] = BUCKET_EDGES) -> list[str]:
    return [f"{lo}-{hi}" for lo, hi in zip(edges, edges[1:])] + [f"{edges[-1]}+"]


@dataclass
class EvalRecord:
    sample_id: int
    task: str
    desc_token_len: int
    verdict: Verdict
    gold: Verdict
    correct: bool
    raw_output: str


@dataclass
class EvalReport:
    mode: str
    records: list[EvalRecord] = field(default_factory=list)

    @property
    def accuracy(self) -> float:
        return float(np.mean([r.correct for r in self.records])) if self.records else float("nan")

    def per_task(self) -> dict[str, float]:
        out: dict[str, list[bool]] = {}
        for r in self.records:
            out.setdefault(r.task, []).append(r.correct)
        return {k: float(np.mean(v)) for k, v in sorted(out.items())}

    def buckets(self, edges: Sequence[int] = BUCKET_EDGES) -> dict[str, dict[str, int]]:
        table = {b: {"total": 0, "correct": 0} for b in bucket_labels(edges)}
        for r in self.records:
            cell = table[bucket_label(r.desc_token_len, edges)]
            cell["total"] += 1
            cell["correct"] += int(r.correct)
        return table

    def subset(self, predicate) -> "EvalReport":
        return EvalReport(self.mode, [r for r in self.records if predicate(r)])

    def aggregates(self) -> dict:
        return {
            "count": len(self.records),
            "accuracy": self.accuracy,
            "per_task": self.per_task(),
            "buckets": self.buckets(),
            "unparsable": sum(r.verdict is Verdict.UNPARSABLE for r in self.records),
        }

    def to_json(self) -> dict:
        recs = []
        for r in self.records:
            d = asdict(r)
            d["verdict"], d["gold"] = r.verdict.value, r.gold.value
            recs.append(d)
        return {"mode": self.mode, "aggregates": self.aggregates(), "records": recs}

    @classmethod
    def from_json(cls, obj: dict) -> "EvalReport":
        recs = [
            EvalRecord(
                r["sample_id"], r["task"], r["desc_token_len"], Verdict(r["verdict"]), Verdict(r["gold"]),
                bool(r["correct"]), r["raw_output"],
            )
            for r in obj["records"]
        ]
        return cls(obj["mode"], recs)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "EvalReport":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def write_bucket_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["bucket", "total", "correct", "accuracy"])
            for b, cell in self.buckets().items():
                acc = cell["correct"] / cell["total"] if cell["total"] else ""
                w.writerow([b, cell["total"], cell["correct"], acc])


def gold_verdict(sample: InstructionSample) -> Verdict:
    v = verdict_of(sample.answer)
    if v is None:
        raise ValueError("sample answer carries no '### Yes.' / '### No.' verdict")
    return Verdict.YES if v else Verdict.NO


def build_prompt(params: ModelParams, vocab: Vocab, sample: InstructionSample, mode: Mode | str,
                 max_new: int = 24, system_msg: str = DEFAULT_SYSTEM) -> tuple[list[int], object]:
    """Query ids and graph rows exactly as the model sees them in ``mode``."""
    mode = Mode(mode)
    if mode is Mode.GRAPH:
        return vocab.encode(sample.query), graph_tokens(params, sample.graph, vocab)
    if mode is Mode.TEXT:
        return text_mode_query(vocab, params, sample, system_msg, max_new), None
    raise ValueError("random mode has no prompt")


def assembled_prompt(params: ModelParams, vocab: Vocab, sample: InstructionSample, mode: Mode | str,
                     max_new: int = 24, system_msg: str = DEFAULT_SYSTEM) -> AssembledInput:
    q, h = build_prompt(params, vocab, sample, mode, max_new, system_msg)
    return assemble(params, vocab, system_msg, q, h)


def evaluate(
    params: ModelParams | None,
    vocab: Vocab | None,
    samples: Sequence[InstructionSample],
    mode: Mode | str,
    seed: int = 0,
    max_new: int = 24,
    system_msg: str = DEFAULT_SYSTEM,
    threads: int = 1,
    ids: Sequence[int] | None = None,
) -> EvalReport:
    mode = Mode(mode)
    ids = list(ids) if ids is not None else list(range(len(samples)))
    if mode is Mode.RANDOM:
        rng = np.random.default_rng(seed)
        outputs = ["### Yes." if rng.random() < 0.5 else "### No." for _ in samples]
    else:
        if params is None or vocab is None:
            raise ValueError(f"{mode.value} mode needs model parameters and a vocabulary")

        def run(sample: InstructionSample) -> str:
            q, h = build_prompt(params, vocab, sample, mode, max_new, system_msg)
            return generate(params, vocab, system_msg, q, None, max_new=max_new, h_graph=h)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                outputs = list(pool.map(run, samples))
        else:
            outputs = [run(s) for s in samples]
    report = EvalReport(mode.value)
    for sid, s, out in zip(ids, samples, outputs):
        v, gold = classify_yes_no(out), gold_verdict(s)
        report.records.append(EvalRecord(sid, s.task.type.value, s.desc_token_len, v, gold, v == gold, out))
    return report


# ---------------------------------------------------------------- judge protocol


def build_judge_prompt(query: str, truth: str, answer_a: str, answer_b: str, swap: bool = False) -> dict:
    """Pairwise judge prompt; with ``swap`` model B is shown as user1."""
    for name, value in (("query", query), ("truth", truth), ("answer_a", answer_a), ("answer_b", answer_b)):
        if not value:
            raise ValueError(f"{name} must be non-empty")
    first, second = (answer_b, answer_a) if swap else (answer_a, answer_b)
    return {
        "system": JUDGE_SYSTEM,
        "user": JUDGE_USER.format(query=query, truth=truth, user1=first, user2=second),
        "swap": bool(swap),
    }


def parse_judge_choice(response: str, swap: bool = False) -> Choice:
    m = _JUDGE.search(response)
    if m is None:
        return Choice.INVALID
    word = m.group(1).lower()
    if word == "none":
        return Choice.NEITHER
    first = word == "user1"
    if swap:
        first = not first
    return Choice.MODEL_A if first else Choice.MODEL_B


@dataclass
class JudgeTally:
    model_a: float
    model_b: float
    neither: float
    valid: int
    invalid: int


def judge_tally(choices: Iterable[Choice]) -> JudgeTally:
    choices = [Choice(c) for c in choices]
    valid = [c for c in choices if c is not Choice.INVALID]
    if not valid:
        raise AllInvalid(f"all {len(choices)} judge responses are invalid")
    n = len(valid)
    return JudgeTally(
        model_a=sum(c is Choice.MODEL_A for c in valid) / n,
        model_b=sum(c is Choice.MODEL_B for c in valid) / n,
        neither=sum(c is Choice.NEITHER for c in valid) / n,
        valid=n,
        invalid=len(choices) - n,
    )


def write_judge_prompts(samples: Sequence[InstructionSample], report_a: EvalReport, report_b: EvalReport,
                        path: str | Path, seed: int = 0, randomize: bool = True) -> int:
    """Emit one JSONL prompt per sample answered by both reports; returns the prompt count."""
    rng = np.random.default_rng(seed)
    by_a = {r.sample_id: r for r in report_a.records}
    by_b = {r.sample_id: r for r in report_b.records}
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for sid in sorted(by_a.keys() & by_b.keys()):
            s = samples[sid]
            query = f"{render_description(s.graph)} {s.query}"
            swap = bool(rng.random() < 0.5) if randomize else False
            prompt = build_judge_prompt(query, s.answer, by_a[sid].raw_output or "(empty)",
                                        by_b[sid].raw_output or "(empty)", swap)
            fh.write(json.dumps({"id": sid, **prompt}) + "\n")
            n += 1
    return n


def read_judge_choices(prompts_path: str | Path, responses_path: str | Path) -> list[Choice]:
    swaps = {}
    with open(prompts_path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                swaps[obj["id"]] = bool(obj["swap"])
    out = []
    with open(responses_path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                if obj.get("id") not in swaps:
                    out.append(Choice.INVALID)
                    continue
                out.append(parse_judge_choice(str(obj["response"]), swaps[obj["id"]]))
    return out
