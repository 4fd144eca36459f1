import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from graphllava.datasets import build_stage2, stage2_sample
from graphllava.errors import AllInvalid
from graphllava.evaluation import (
    JUDGE_SYSTEM,
    Choice,
    EvalReport,
    Mode,
    Verdict,
    assembled_prompt,
    bucket_label,
    bucket_labels,
    build_judge_prompt,
    classify_yes_no,
    evaluate,
    judge_tally,
    parse_judge_choice,
    read_judge_choices,
    write_judge_prompts,
)
from graphllava.graph_core import Graph, Task, TaskType, random_graph
from conftest import tiny_setup


@pytest.mark.parametrize("text, want", [
    ("### Yes, there is a cycle in this graph.", Verdict.YES),
    ("There is no path between node 28 and node 11.", Verdict.NO),
    ("", Verdict.UNPARSABLE),
    ("maybe", Verdict.UNPARSABLE),
    ("no idea, but ### Yes.", Verdict.YES),
    ("Yesterday", Verdict.UNPARSABLE),
    ("NO.", Verdict.NO),
])
def test_classify(text, want):
    assert classify_yes_no(text) is want


def test_buckets_half_open():
    assert bucket_label(0) == "0-200"
    assert bucket_label(199) == "0-200"
    assert bucket_label(200) == "200-400"
    assert bucket_label(1600) == "1600+"
    assert bucket_label(5000) == "1600+"
    assert len(bucket_labels()) == 9


@given(st.integers(0, 3000))
def test_bucket_contains_value(n):
    lab = bucket_label(n)
    if lab.endswith("+"):
        assert n >= 1600
    else:
        lo, hi = map(int, lab.split("-"))
        assert lo <= n < hi


def balanced_samples(n):
    yes = stage2_sample(Graph(3, frozenset({(0, 1), (1, 2), (0, 2)})), Task.cycle())
    no = stage2_sample(Graph(3, frozenset({(0, 1)})), Task.cycle())
    return [yes if i % 2 else no for i in range(n)]


def test_random_mode_balanced():
    rep = evaluate(None, None, balanced_samples(1000), Mode.RANDOM, seed=1)
    assert 0.45 <= rep.accuracy <= 0.55
    assert rep.aggregates()["unparsable"] == 0
    again = evaluate(None, None, balanced_samples(1000), "random", seed=1)
    assert [r.raw_output for r in again.records] == [r.raw_output for r in rep.records]


def test_report_roundtrip_and_csv(tmp_path):
    rep = evaluate(None, None, balanced_samples(20), Mode.RANDOM, seed=3)
    rep.save(tmp_path / "r.json")
    back = EvalReport.load(tmp_path / "r.json")
    assert back == rep
    rep.write_bucket_csv(tmp_path / "b.csv")
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "bucket,total,correct,accuracy" and len(lines) == 10
    assert rep.per_task().keys() == {"cycle"}
    assert sum(c["total"] for c in rep.buckets().values()) == 20
    assert sum(c["correct"] for c in rep.buckets().values()) == sum(r.correct for r in rep.records)


def test_model_modes_need_params():
    with pytest.raises(ValueError):
        evaluate(None, None, balanced_samples(2), Mode.GRAPH)


def test_graph_and_text_segments():
    vocab, params = tiny_setup(max_seq=128)
    s = stage2_sample(random_graph(5, 0.5, 3), Task.cycle())
    g = assembled_prompt(params, vocab, s, Mode.GRAPH, max_new=8, system_msg="graphs")
    lo, hi = g.graph_span
    assert hi - lo == params.config.k_graph_tokens
    assert g.query_span[0] < g.query_span[1] <= lo
    assert g.target_ids[g.query_span[0]:g.query_span[1]].tolist() == vocab.encode(s.query)
    assert not g.loss_mask.any()
    t = assembled_prompt(params, vocab, s, Mode.TEXT, max_new=8, system_msg="graphs")
    assert t.graph_span is None
    q = t.target_ids[t.query_span[0]:t.query_span[1]].tolist()
    assert q[: len(vocab.encode("The nodes are"))] == vocab.encode("The nodes are")
    assert t.length + 8 <= params.config.max_seq


def test_evaluate_graph_mode_runs():
    vocab, params = tiny_setup(max_seq=128)
    samples = build_stage2([random_graph(5, 0.5, i) for i in range(4)], [TaskType.CYCLE], np.random.default_rng(0))
    a = evaluate(params, vocab, samples, Mode.GRAPH, max_new=4, system_msg="graphs")
    b = evaluate(params, vocab, samples, Mode.GRAPH, max_new=4, system_msg="graphs", threads=2)
    assert [r.raw_output for r in a.records] == [r.raw_output for r in b.records]
    assert len(a.records) == 4


def test_judge_prompt():
    p = build_judge_prompt("q?", "### Yes.", "A says yes", "B says no")
    assert p["system"] == JUDGE_SYSTEM
    assert "user1's answer is A says yes. user2's answer is B says no." in p["user"]
    s = build_judge_prompt("q?", "### Yes.", "A says yes", "B says no", swap=True)
    assert "user1's answer is B says no." in s["user"] and s["swap"]
    with pytest.raises(ValueError):
        build_judge_prompt("", "t", "a", "b")
    assert JUDGE_SYSTEM.endswith("'user1' or 'user2' or 'none'")


@pytest.mark.parametrize("resp, swap, want", [
    ("user1", False, Choice.MODEL_A),
    ("user1", True, Choice.MODEL_B),
    ("I pick User2.", False, Choice.MODEL_B),
    ("user2", True, Choice.MODEL_A),
    ("none", True, Choice.NEITHER),
    ("both are fine", False, Choice.INVALID),
])
def test_parse_judge_choice(resp, swap, want):
    assert parse_judge_choice(resp, swap) is want


def test_tally():
    t = judge_tally([Choice.MODEL_A, Choice.MODEL_A, Choice.MODEL_B, Choice.NEITHER, Choice.INVALID])
    assert (t.model_a, t.model_b, t.neither, t.valid, t.invalid) == (0.5, 0.25, 0.25, 4, 1)
    with pytest.raises(AllInvalid):
        judge_tally([Choice.INVALID, Choice.INVALID])
    with pytest.raises(AllInvalid):
        judge_tally([])


def test_judge_files(tmp_path):
    samples = balanced_samples(6)
    a = evaluate(None, None, samples, Mode.RANDOM, seed=0)
    b = evaluate(None, None, samples, Mode.RANDOM, seed=1)
    n = write_judge_prompts(samples, a, b, tmp_path / "p.jsonl", seed=4)
    prompts = [json.loads(x) for x in (tmp_path / "p.jsonl").read_text().splitlines()]
    assert n == 6 and [p["id"] for p in prompts] == list(range(6))
    responses = [{"id": p["id"], "response": "user1"} for p in prompts] + [{"id": 77, "response": "user1"}]
    (tmp_path / "r.jsonl").write_text("\n".join(json.dumps(r) for r in responses))
    got = read_judge_choices(tmp_path / "p.jsonl", tmp_path / "r.jsonl")
    want = [Choice.MODEL_B if p["swap"] else Choice.MODEL_A for p in prompts] + [Choice.INVALID]
    assert got == want
