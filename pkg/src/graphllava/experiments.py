"""Length-trend experiment: graph-token model vs text-prompt model as descriptions outgrow the context.

Graphs are sampled with an exact edge count so the description length can be
targeted, and with a per-graph average degree ``c`` shared by every task. That
one knob drives all three yes/no answers, so a model that sees the graph (or
the full text) can beat the per-task prior, while a text prompt cut before the
question cannot even tell which task is being asked.
"""

from __future__ import annotations

import time
from statistics import NormalDist
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .datasets import (
    assign_splits,
    build_stage1,
    draw_task,
    generate_graphs,
    label_balance,
    stage2_sample,
    with_split,
)
from .evaluation import EvalReport, Mode, evaluate
from .graph_core import Graph, TaskType
from .model import DEFAULT_SYSTEM, ModelConfig, init_params
from .pipeline import TrainConfig, run_stage
from .tokenizer import Vocab, build_vocab

HEADER_TOKENS = 15  # "The nodes are numbered from 0 to N , and the edges are :" plus the final "."
EDGE_TOKENS = 5  # "( u , v )"

TREND_TASKS = (TaskType.CYCLE, TaskType.CONNECTIVITY, TaskType.BIPARTITE)


@dataclass
class TrendConfig:
    max_seq: int = 256
    n_graphs: int = 1500
    test_frac: float = 0.3
    len_range: tuple[float, float] = (0.5, 3.0)  # description length as a multiple of max_seq
    degree_range: tuple[float, float] = (0.4, 3.0)
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128
    d_g: int = 32
    lm_epochs: int = 4  # base-decoder pretraining on train-split text, shared by both models
    align_epochs: int = 1
    finetune_epochs: int = 12
    lr: float = 1e-3
    batch_size: int = 8
    max_new: int = 16
    seed: int = 0
    bucket_width: int = 0  # 0 -> max_seq / 4, so one bucket edge sits on max_seq

    def __post_init__(self) -> None:
        if self.len_range[0] <= 0 or self.len_range[1] <= self.len_range[0]:
            raise ValueError("len_range must be increasing and positive")
        if self.degree_range[0] <= 0 or self.degree_range[1] <= self.degree_range[0]:
            raise ValueError("degree_range must be increasing and positive")

    @property
    def width(self) -> int:
        return self.bucket_width or max(self.max_seq // 4, 1)

    def edges(self) -> tuple[int, ...]:
        top = int(self.len_range[1] * self.max_seq) + self.width
        return tuple(range(0, top + 1, self.width))


def graph_with_length(target_tokens: int, avg_degree: float, rng: np.random.Generator) -> Graph:
    """G(n, m) graph whose description has about ``target_tokens`` tokens and mean degree ``avg_degree``."""
    m = max((target_tokens - HEADER_TOKENS) // EDGE_TOKENS, 1)
    n = max(int(round(2 * m / avg_degree)), 2)
    while n * (n - 1) // 2 < m:
        n += 1
    pairs = rng.choice(n * (n - 1) // 2, size=m, replace=False)
    # unrank pair index -> (u, v) with u < v, row-major over the upper triangle
    starts = np.cumsum([0] + [n - 1 - i for i in range(n - 1)])
    u = np.searchsorted(starts, pairs, side="right") - 1
    v = pairs - starts[u] + u + 1
    return Graph(n, frozenset(zip(u.tolist(), v.tolist())))


def trend_samples(cfg: TrendConfig, rng: np.random.Generator):
    """Stage-1 describe samples (train graphs only) and split stage-2 samples."""
    stage2 = []
    graphs = []
    lo, hi = cfg.len_range
    for _ in range(cfg.n_graphs):
        # log-uniform, so the within-budget share is ln(1/lo) / ln(hi/lo) rather than a sliver
        target = int(np.exp(rng.uniform(np.log(lo), np.log(hi))) * cfg.max_seq)
        c = float(rng.uniform(*cfg.degree_range))
        g = graph_with_length(target, c, rng)
        kind = TREND_TASKS[int(rng.integers(len(TREND_TASKS)))]
        graphs.append(g)
        stage2.append(stage2_sample(g, draw_task(g, kind, rng), budget=cfg.max_seq))
    labels = assign_splits(stage2, cfg.test_frac, rng, cfg.width)
    stage2 = [with_split(s, lab) for s, lab in zip(stage2, labels)]
    train_graphs = [g for g, s in zip(graphs, stage2) if s.split == "train"]
    stage1 = build_stage1(train_graphs, rng, budget=cfg.max_seq - 40)
    return stage1, stage2


@dataclass
class TrendResult:
    config: dict
    buckets: dict[str, dict[str, dict[str, float]]]  # mode -> bucket -> {total, correct, accuracy}
    over_budget: dict[str, float]  # mode -> accuracy on descriptions longer than max_seq
    within_budget: dict[str, float]
    label_balance: dict
    seconds: float
    reports: dict[str, EvalReport] = field(default_factory=dict, repr=False)

    @property
    def margin_ok(self) -> bool:
        g, t = self.over_budget["graph"], self.over_budget["text"]
        return t <= 0.55 and g >= 0.55 and g >= t + 0.10

    def degradation(self, mode: str = "text", alpha: float = 0.05) -> dict:
        """Does ``mode`` get worse as descriptions grow, beyond sampling noise?

        Two parts: the within-budget accuracy beats the over-budget one by a
        one-sided two-proportion z >= 2, and no longer bucket is significantly
        better than a shorter one (pairwise z, Bonferroni over all pairs).
        """
        cells = [(b, c) for b, c in self.buckets[mode].items() if c["total"]]
        pairs = [(i, j) for i in range(len(cells)) for j in range(i + 1, len(cells))]
        z_crit = float(_normal_quantile(1 - alpha / max(len(pairs), 1)))
        worst = (-np.inf, None)
        for i, j in pairs:
            z = _two_prop_z(cells[j][1], cells[i][1])
            if z > worst[0]:
                worst = (z, (cells[i][0], cells[j][0]))
        within = self.reports[mode].subset(lambda r: r.desc_token_len <= self.config["max_seq"]) if self.reports else None
        over = self.reports[mode].subset(lambda r: r.desc_token_len > self.config["max_seq"]) if self.reports else None
        if within is not None and within.records and over.records:
            z_drop = _two_prop_z(
                {"correct": sum(r.correct for r in within.records), "total": len(within.records)},
                {"correct": sum(r.correct for r in over.records), "total": len(over.records)},
            )
        else:
            z_drop = float("nan")
        return {
            "z_drop": z_drop,
            "worst_rise_z": float(worst[0]),
            "worst_rise_pair": worst[1],
            "z_crit": z_crit,
            "ok": bool(z_drop >= 2.0 and worst[0] < z_crit),
        }

    def table(self) -> str:
        modes = list(self.buckets)
        lines = ["bucket," + ",".join(f"{m}_total,{m}_correct,{m}_acc" for m in modes)]
        for b in next(iter(self.buckets.values())):
            cells = []
            for m in modes:
                c = self.buckets[m][b]
                acc = f"{c['accuracy']:.3f}" if c["total"] else ""
                cells.append(f"{c['total']},{c['correct']},{acc}")
            lines.append(b + "," + ",".join(cells))
        return "\n".join(lines)

    def to_json(self) -> dict:
        d = {
            "config": self.config, "buckets": self.buckets, "over_budget": self.over_budget,
            "within_budget": self.within_budget, "label_balance": self.label_balance, "seconds": self.seconds,
        }
        d["margin_ok"] = self.margin_ok
        d["text_degradation"] = self.degradation("text")
        return d


def _normal_quantile(p: float) -> float:
    return NormalDist().inv_cdf(p)


def _two_prop_z(a: dict, b: dict) -> float:
    """z for accuracy(a) - accuracy(b) > 0 with a pooled standard error."""
    na, nb = a["total"], b["total"]
    pa, pb = a["correct"] / na, b["correct"] / nb
    pool = (a["correct"] + b["correct"]) / (na + nb)
    se = np.sqrt(pool * (1 - pool) * (1 / na + 1 / nb))
    if se == 0:
        return 0.0 if pa == pb else float(np.sign(pa - pb) * np.inf)
    return float((pa - pb) / se)


def _bucket_table(report: EvalReport, edges: Sequence[int]) -> dict[str, dict[str, float]]:
    out = {}
    for b, cell in report.buckets(edges).items():
        acc = cell["correct"] / cell["total"] if cell["total"] else float("nan")
        out[b] = {"total": cell["total"], "correct": cell["correct"], "accuracy": acc}
    return out


def _vocab_for(samples) -> Vocab:
    corpus = [DEFAULT_SYSTEM]
    for s in samples:
        corpus += [s.query, s.answer]
        corpus += list(s.graph.node_features[:1])
        corpus.append(f"0 to {s.graph.num_nodes - 1}")
    # every node id that can appear in a description or a connectivity question
    top = max(s.graph.num_nodes for s in samples)
    corpus.append(" ".join(str(i) for i in range(top)))
    return build_vocab(corpus, max_size=top + 1024)


def run_trend(cfg: TrendConfig, log: Callable[[str], None] | None = None, threads: int = 1) -> TrendResult:
    log = log or (lambda _msg: None)
    t0 = time.time()
    rng = np.random.default_rng([cfg.seed, 8])
    stage1, stage2 = trend_samples(cfg, rng)
    train = [s for s in stage2 if s.split == "train"]
    test = [s for s in stage2 if s.split == "test"]
    vocab = _vocab_for(stage1 + stage2)
    mcfg = ModelConfig(
        vocab_size=vocab.size, d_model=cfg.d_model, n_layers=cfg.n_layers, n_heads=cfg.n_heads,
        d_ff=cfg.d_ff, max_seq=cfg.max_seq, d_g=cfg.d_g, seed=cfg.seed,
    )
    log(f"trend: {len(stage1)} describe / {len(train)} train / {len(test)} test samples, vocab {vocab.size}")

    def tc(stage, epochs, text_mode=False):
        return TrainConfig(stage=stage, epochs=epochs, lr=cfg.lr, batch_size=cfg.batch_size, seed=cfg.seed,
                           text_mode=text_mode, answer_budget=cfg.max_new)

    base = init_params(mcfg)
    if cfg.lm_epochs:
        run_stage(tc("lm_pretrain", cfg.lm_epochs), base, train, vocab, log=lambda m: log("lm pretrain " + m))
    graph_params = base.copy()
    run_stage(tc("align", cfg.align_epochs), graph_params, stage1, vocab, log=lambda m: log("graph align " + m))
    run_stage(tc("finetune", cfg.finetune_epochs), graph_params, train, vocab,
              log=lambda m: log("graph finetune " + m))
    text_params = base.copy()
    run_stage(tc("finetune", cfg.finetune_epochs, text_mode=True), text_params, train, vocab,
              log=lambda m: log("text finetune " + m))

    reports = {
        "graph": evaluate(graph_params, vocab, test, Mode.GRAPH, max_new=cfg.max_new, threads=threads),
        "text": evaluate(text_params, vocab, test, Mode.TEXT, max_new=cfg.max_new, threads=threads),
        "random": evaluate(None, None, test, Mode.RANDOM, seed=cfg.seed),
    }
    edges = cfg.edges()
    over = {m: r.subset(lambda rec: rec.desc_token_len > cfg.max_seq).accuracy for m, r in reports.items()}
    within = {m: r.subset(lambda rec: rec.desc_token_len <= cfg.max_seq).accuracy for m, r in reports.items()}
    result = TrendResult(
        config=asdict(cfg),
        buckets={m: _bucket_table(r, edges) for m, r in reports.items()},
        over_budget=over,
        within_budget=within,
        label_balance={k: list(v) for k, v in label_balance(stage2).items()},
        seconds=time.time() - t0,
        reports=reports,
    )
    log(f"trend: over-budget accuracy graph {over['graph']:.3f} text {over['text']:.3f} "
        f"({result.seconds:.0f}s)")
    return result


@dataclass
class OverfitResult:
    accuracy_by_epoch: dict[int, float]  # finetune epochs run so far -> training yes/no accuracy
    align_losses: list[float]
    finetune_losses: list[float]
    seconds: float

    @property
    def epochs_needed(self) -> int | None:
        for e, acc in sorted(self.accuracy_by_epoch.items()):
            if acc >= 0.95:
                return e
        return None


def overfit_check(n_samples: int = 32, d_model: int = 64, max_epochs: int = 200, check_every: int = 20,
                  lr: float = 1e-3, batch_size: int = 8, base_samples: int = 256, lm_epochs: int = 4,
                  seed: int = 0, log: Callable[[str], None] | None = None) -> OverfitResult:
    """Align then finetune on a tiny set, measuring training accuracy every ``check_every`` epochs.

    The base decoder is first LM-pretrained on ``base_samples`` other graphs
    (disjoint from the training set), standing in for a pretrained backbone.
    Stops as soon as accuracy reaches 95% or ``max_epochs`` finetune epochs have run.
    """
    log = log or (lambda _msg: None)
    t0 = time.time()
    rng = np.random.default_rng([seed, 32])
    kinds = list(TaskType)
    pairs = generate_graphs(n_samples + base_samples, (5, 12), rng, kinds, calib_seed=seed)
    everything = [stage2_sample(g, draw_task(g, kind, rng)) for g, kind in pairs]
    base, stage2 = everything[n_samples:], everything[:n_samples]
    stage1 = build_stage1([g for g, _ in pairs[:n_samples]], rng, budget=160 - 40)
    vocab = _vocab_for(stage1 + everything)
    cfg = ModelConfig(vocab_size=vocab.size, d_model=d_model, n_layers=2, n_heads=4, d_ff=2 * d_model,
                      max_seq=160, d_g=32, seed=seed)
    params = init_params(cfg)
    if lm_epochs and base:
        run_stage(TrainConfig(stage="lm_pretrain", epochs=lm_epochs, lr=lr, seed=seed), params, base, vocab)
    align = run_stage(TrainConfig(stage="align", epochs=3, lr=lr, seed=seed), params, stage1, vocab)
    accs: dict[int, float] = {}
    losses: list[float] = []
    done = 0
    while done < max_epochs:
        chunk = min(check_every, max_epochs - done)
        # a fresh optimizer per chunk; a different seed keeps the shuffles from repeating
        res = run_stage(TrainConfig(stage="finetune", epochs=chunk, lr=lr, batch_size=batch_size, seed=seed + done),
                        params, stage2, vocab)
        losses += res.epoch_losses
        done += chunk
        accs[done] = evaluate(params, vocab, stage2, Mode.GRAPH, max_new=16).accuracy
        log(f"overfit: {done} finetune epochs, loss {losses[-1]:.4f}, train accuracy {accs[done]:.3f}")
        if accs[done] >= 0.95:
            break
    return OverfitResult(accs, align.epoch_losses, losses, time.time() - t0)
