import numpy as np
import pytest
from hypothesis import given, strategies as st

from graphllava.datasets import description_length
from graphllava.experiments import (
    EDGE_TOKENS,
    HEADER_TOKENS,
    TrendConfig,
    TrendResult,
    _two_prop_z,
    graph_with_length,
    trend_samples,
)
from graphllava.graph_core import render_description
from graphllava.tokenizer import split_tokens


@given(st.integers(20, 900), st.floats(0.4, 3.0), st.integers(0, 2**16))
def test_graph_with_length(target, c, seed):
    g = graph_with_length(target, c, np.random.default_rng(seed))
    m = max((target - HEADER_TOKENS) // EDGE_TOKENS, 1)
    assert len(g.edges) == m
    assert all(0 <= u < v < g.num_nodes for u, v in g.edges)
    n_tokens = len(split_tokens(render_description(g)))
    assert n_tokens == HEADER_TOKENS + EDGE_TOKENS * m == description_length(g)
    assert n_tokens <= max(target, HEADER_TOKENS + EDGE_TOKENS)


def test_config_edges():
    cfg = TrendConfig()
    assert cfg.width == 64 and 256 in cfg.edges()
    with pytest.raises(ValueError):
        TrendConfig(len_range=(2.0, 1.0))


def test_trend_samples_split_and_span():
    cfg = TrendConfig(n_graphs=120, max_seq=128)
    s1, s2 = trend_samples(cfg, np.random.default_rng(0))
    lens = [s.desc_token_len for s in s2]
    assert min(lens) >= 0.5 * 128 - EDGE_TOKENS and max(lens) <= 3 * 128
    assert any(n <= 128 for n in lens) and any(n > 128 for n in lens)
    assert {s.split for s in s2} == {"train", "test"}
    assert len(s1) == sum(s.split == "train" for s in s2)
    again = trend_samples(cfg, np.random.default_rng(0))[1]
    assert again == s2


def test_two_prop_z():
    a = {"correct": 80, "total": 100}
    b = {"correct": 50, "total": 100}
    p = 130 / 200
    want = 0.3 / np.sqrt(p * (1 - p) * 0.02)
    assert _two_prop_z(a, b) == pytest.approx(want)
    assert _two_prop_z(b, a) == pytest.approx(-want)
    assert _two_prop_z(a, a) == 0.0


def fake_result(text_accs, n=40):
    buckets = {}
    for mode, accs in (("text", text_accs), ("graph", [0.8] * len(text_accs))):
        buckets[mode] = {}
        for i, acc in enumerate(accs):
            c = int(round(acc * n))
            buckets[mode][f"{64 * i}-{64 * (i + 1)}"] = {"total": n, "correct": c, "accuracy": c / n}
    return TrendResult({"max_seq": 128}, buckets, {"graph": 0.8, "text": 0.5}, {}, {}, 0.0)


def test_degradation_flags_significant_rise():
    flat_noise = fake_result([0.9, 0.85, 0.5, 0.45, 0.55, 0.5])
    d = flat_noise.degradation("text")
    assert d["worst_rise_z"] < d["z_crit"] and np.isnan(d["z_drop"]) and not d["ok"]
    rising = fake_result([0.3, 0.35, 0.9, 0.95])
    d = rising.degradation("text")
    assert d["worst_rise_z"] > d["z_crit"]
    assert d["worst_rise_pair"] == ("0-64", "192-256")


def test_margin():
    r = fake_result([0.5])
    assert r.margin_ok
    r.over_budget = {"graph": 0.6, "text": 0.55}
    assert not r.margin_ok
    assert r.table().splitlines()[0] == "bucket,text_total,text_correct,text_acc,graph_total,graph_correct,graph_acc"
