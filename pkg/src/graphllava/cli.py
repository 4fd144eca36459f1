"""``graphllava`` command line: data generation, the training stages, evaluation and checks.

Results go to stdout (comma-delimited where tabular), logs to stderr, and
files only to paths given with ``--out`` and friends.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import CliConfig, load_config
from .datasets import (
    assign_splits,
    build_stage1,
    draw_task,
    generate_graphs,
    label_balance,
    load_dataset,
    save_dataset,
    stage2_sample,
    with_split,
)
from .errors import GraphLlavaError, UsageError
from .evaluation import (
    EvalReport,
    Mode,
    evaluate,
    judge_tally,
    read_judge_choices,
    write_judge_prompts,
)
from .graph_core import render_description
from .model import Stage, init_params
from .pipeline import load_checkpoint, run_stage, save_checkpoint, verify_freeze
from .tokenizer import Vocab, build_vocab

log = logging.getLogger("graphllava")

TOY_SPLIT = "toy_stage2.jsonl"


def toy_split_path() -> Path:
    return Path(str(resources.files("graphllava") / "data" / TOY_SPLIT))


# ---------------------------------------------------------------- helpers


def _resolve(args) -> CliConfig:
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got '{item}'")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    for key in ("seed", "threads", "graphs", "epochs", "lr", "batch_size", "max_new"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    cfg = load_config(args.config, overrides)
    log.info("resolved config:\n%s", cfg.render())
    return cfg


def _samples(path: str, split: str):
    samples = load_dataset(path)
    if split == "all":
        return samples
    picked = [s for s in samples if s.split == split]
    if not picked:
        raise UsageError(f"{path} has no '{split}' samples (use --split all)")
    return picked


def _vocab(args, ckpt=None) -> Vocab:
    if getattr(args, "vocab", None):
        return Vocab.load(args.vocab)
    if ckpt is not None and ckpt.vocab is not None:
        return ckpt.vocab
    raise UsageError("a vocabulary is needed: pass --vocab or a checkpoint that embeds one")


def _model(cfg: CliConfig, args):
    """Parameters from ``--init`` when given, else freshly initialised."""
    if getattr(args, "init", None):
        ckpt = load_checkpoint(args.init)
        return ckpt.params, _vocab(args, ckpt)
    vocab = _vocab(args)
    return init_params(cfg.model_config(vocab.size)), vocab


# ---------------------------------------------------------------- subcommands


def cmd_gen_data(args) -> int:
    cfg = _resolve(args)
    kinds = cfg.task_types()
    rng_graphs = cfg.rng("graphs")
    if cfg.edge_prob_max > 0:
        pairs = []
        for _ in range(cfg.graphs):
            p = float(rng_graphs.uniform(cfg.edge_prob_min, cfg.edge_prob_max))
            pairs += generate_graphs(1, (cfg.min_nodes, cfg.max_nodes), rng_graphs, kinds, edge_prob=p)
    else:
        pairs = generate_graphs(cfg.graphs, (cfg.min_nodes, cfg.max_nodes), rng_graphs, kinds, calib_seed=cfg.seed)
    rng_tasks = cfg.rng("tasks")
    stage2 = [stage2_sample(g, draw_task(g, kind, rng_tasks), cfg.token_budget) for g, kind in pairs]
    labels = assign_splits(stage2, cfg.test_frac, cfg.rng("split"))
    stage2 = [with_split(s, lab) for s, lab in zip(stage2, labels)]
    stage1 = build_stage1([g for g, _ in pairs], cfg.rng("instructions"), cfg.token_budget)
    stage1 = [with_split(s, lab) for s, lab in zip(stage1, labels)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(stage1, out / "stage1.jsonl")
    save_dataset(stage2, out / "stage2.jsonl")
    print("task,yes,total,yes_rate")
    for task, (yes, total) in label_balance(stage2).items():
        print(f"{task},{yes},{total},{yes / total:.3f}")
    log.info("wrote %d stage-1 and %d stage-2 samples to %s", len(stage1), len(stage2), out)
    return 0


def cmd_build_vocab(args) -> int:
    cfg = _resolve(args)
    corpus = [f"SYSTEM: {cfg.system_msg}", "USER: ASSISTANT:"]
    for path in args.data:
        for s in load_dataset(path):
            corpus += [s.query, s.answer, render_description(s.graph)]
            corpus += list(s.graph.node_features)
    vocab = build_vocab(corpus, max_size=cfg.vocab_size)
    vocab.save(args.out)
    print(f"vocab_size,{vocab.size}")
    return 0


def _train(args, stage: Stage, text_mode: bool = False) -> int:
    cfg = _resolve(args)
    params, vocab = _model(cfg, args)
    if stage is Stage.FINETUNE and not text_mode and "align" not in params.history and not args.force:
        raise UsageError("checkpoint never ran align; run align first or pass --force")
    samples = _samples(args.data, args.split)
    before = params.snapshot()
    tc = cfg.train_config(stage, text_mode=text_mode, metrics_csv=args.metrics)
    result = run_stage(tc, params, samples, vocab, log=log.info)
    changed = verify_freeze(before, params, stage)
    if changed:
        raise GraphLlavaError(f"frozen tensors changed during {stage.value}: {changed[:5]}")
    save_checkpoint(params, args.out, tc, vocab)
    print("epoch,mean_loss")
    for i, loss in enumerate(result.epoch_losses):
        print(f"{i},{loss:.6f}")
    if args.figure:
        from .plotting import plot_losses

        plot_losses({stage.value: result.step_losses}, args.figure, title=f"{stage.value} loss")
    return 0


def cmd_pretrain_lm(args) -> int:
    return _train(args, Stage.LM_PRETRAIN)


def cmd_pretrain_encoder(args) -> int:
    return _train(args, Stage.ENCODER_PRETRAIN)


def cmd_align(args) -> int:
    return _train(args, Stage.ALIGN)


def cmd_finetune(args) -> int:
    return _train(args, Stage.FINETUNE, text_mode=args.text_mode)


def cmd_eval(args) -> int:
    cfg = _resolve(args)
    mode = Mode(args.mode)
    data = args.data or str(toy_split_path())
    samples = _samples(data, args.split)
    params = vocab = None
    if mode is not Mode.RANDOM:
        if not args.checkpoint:
            raise UsageError(f"--mode {mode.value} needs --checkpoint")
        ckpt = load_checkpoint(args.checkpoint)
        params, vocab = ckpt.params, _vocab(args, ckpt)
    report = evaluate(params, vocab, samples, mode, seed=cfg.seed, max_new=cfg.max_new,
                      system_msg=cfg.system_msg, threads=cfg.threads)
    print(f"accuracy,{report.accuracy:.4f}")
    for task, acc in report.per_task().items():
        print(f"task:{task},{acc:.4f}")
    print("bucket,total,correct")
    for b, cell in report.buckets().items():
        if cell["total"]:
            print(f"{b},{cell['total']},{cell['correct']}")
    if args.out:
        report.save(args.out)
    if args.csv:
        report.write_bucket_csv(args.csv)
    if args.figure:
        from .plotting import plot_buckets

        plot_buckets(report.buckets(), args.figure, title=f"{mode.value} mode")
    return 0


def cmd_judge_prompts(args) -> int:
    cfg = _resolve(args)
    samples = _samples(args.data, args.split)
    n = write_judge_prompts(samples, EvalReport.load(args.report_a), EvalReport.load(args.report_b), args.out,
                            seed=cfg.seed, randomize=not args.no_swap)
    print(f"prompts,{n}")
    return 0


def cmd_judge_tally(args) -> int:
    _resolve(args)
    tally = judge_tally(read_judge_choices(args.prompts, args.responses))
    print("model_a,model_b,neither,valid,invalid")
    print(f"{tally.model_a:.4f},{tally.model_b:.4f},{tally.neither:.4f},{tally.valid},{tally.invalid}")
    if args.figure:
        from .plotting import plot_judge

        plot_judge({"model A": tally.model_a, "model B": tally.model_b, "neither": tally.neither}, args.figure)
    return 0


def cmd_gradcheck(args) -> int:
    cfg = _resolve(args)
    from .diagnostics import GRADCHECK_TOLERANCE, model_gradcheck

    res = model_gradcheck(args.dtype, d_model=args.d_model, seed=cfg.seed, samples_per_tensor=args.samples)
    name, worst = res.report.worst()
    print(f"max_rel_error,{res.report.max_rel_error:.3e}")
    print(f"worst_tensor,{name}")
    print(f"coords,{res.report.coords_checked}")
    print(f"seconds,{res.seconds:.1f}")
    print(f"tolerance,{GRADCHECK_TOLERANCE:.0e}")
    return 0 if res.ok else 1


def cmd_oracle_verify(args) -> int:
    _resolve(args)
    from .verify import sweep

    res = sweep(args.max_nodes)
    print(f"graphs,{res.graphs}")
    print(f"checks,{res.checks}")
    print(f"mismatches,{res.mismatches}")
    if res.first_mismatch is not None:
        print(f"first_mismatch,{res.first_mismatch}")
    return 0 if res.ok else 1


def cmd_inspect_checkpoint(args) -> int:
    ckpt = load_checkpoint(args.path)
    m = ckpt.manifest
    print(f"format_version,{m['format_version']}")
    print(f"history,{'>'.join(m.get('history', [])) or '-'}")
    print(f"vocab,{len(m['vocab']) if m.get('vocab') else 0}")
    print(f"checksum,{m['checksum']}")
    for k, v in m["model_config"].items():
        print(f"config:{k},{v}")
    print("tensor,shape,params")
    total = 0
    for e in m["tensors"]:
        n = int(np.prod(e["shape"], dtype=np.int64))
        total += n
        print(f"{e['name']},{'x'.join(map(str, e['shape']))},{n}")
    print(f"total,,{total}")
    return 0


def cmd_trend(args) -> int:
    cfg = _resolve(args)
    from .experiments import TrendConfig, run_trend
    from .plotting import plot_bucket_accuracy

    tc = TrendConfig(max_seq=args.max_seq, n_graphs=args.trend_graphs, finetune_epochs=args.finetune_epochs,
                     lm_epochs=args.lm_epochs, seed=cfg.seed)
    res = run_trend(tc, log=log.info, threads=cfg.threads)
    print(res.table())
    deg = res.degradation("text")
    for mode in ("graph", "text", "random"):
        print(f"over_budget:{mode},{res.over_budget[mode]:.4f}")
    print(f"margin_ok,{res.margin_ok}")
    print(f"text_degrades,{deg['ok']}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "trend.json").write_text(json.dumps(res.to_json(), indent=1), encoding="utf-8")
        (out / "trend_buckets.csv").write_text(res.table() + "\n", encoding="utf-8")
        plot_bucket_accuracy(res.buckets, out / "trend_accuracy.png", budget=tc.max_seq,
                             title="accuracy by description length")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    common.add_argument("--seed", type=int, help="top-level seed")
    common.add_argument("--threads", type=int, help="worker threads for evaluation (1 = deterministic)")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    p = argparse.ArgumentParser(prog="graphllava", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-data", parents=[common], help="synthesize graphs and stage-1/2 JSONL")
    s.add_argument("--graphs", type=int, help="number of graphs")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(fn=cmd_gen_data)

    s = sub.add_parser("build-vocab", parents=[common], help="word-level vocabulary from dataset files")
    s.add_argument("--data", nargs="+", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_build_vocab)

    for name, fn, text in (
        ("pretrain-lm", cmd_pretrain_lm, "language-model pretraining of the base decoder"),
        ("pretrain-encoder", cmd_pretrain_encoder, "optional graph-encoder pretraining"),
        ("align", cmd_align, "stage 1: train the projection only"),
        ("finetune", cmd_finetune, "stage 2: projection, embeddings, LoRA, layernorms"),
    ):
        s = sub.add_parser(name, parents=[common], help=text)
        s.add_argument("--data", required=True, help="stage JSONL")
        s.add_argument("--split", default="train", choices=["train", "test", "all"])
        s.add_argument("--vocab", help="vocabulary file (default: the one inside --init)")
        s.add_argument("--init", help="checkpoint to start from")
        s.add_argument("--out", required=True, help="checkpoint directory to write")
        s.add_argument("--epochs", type=int)
        s.add_argument("--lr", type=float)
        s.add_argument("--batch-size", dest="batch_size", type=int)
        s.add_argument("--metrics", help="per-step loss CSV")
        s.add_argument("--figure", help="loss-curve image")
        if name == "finetune":
            s.add_argument("--text-mode", action="store_true", help="text-only baseline: description in the prompt")
            s.add_argument("--force", action="store_true", help="allow a checkpoint that never ran align")
        s.set_defaults(fn=fn)

    s = sub.add_parser("eval", parents=[common], help="yes/no accuracy by task and description length")
    s.add_argument("--mode", choices=[m.value for m in Mode], default="graph")
    s.add_argument("--data", help="stage-2 JSONL (default: the shipped toy split)")
    s.add_argument("--split", default="test", choices=["train", "test", "all"])
    s.add_argument("--checkpoint")
    s.add_argument("--vocab")
    s.add_argument("--max-new", dest="max_new", type=int)
    s.add_argument("--out", help="report JSON")
    s.add_argument("--csv", help="bucket table CSV")
    s.add_argument("--figure", help="bucket bar chart")
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("judge-prompts", parents=[common], help="pairwise judge prompts from two reports")
    s.add_argument("--data", required=True)
    s.add_argument("--split", default="test", choices=["train", "test", "all"])
    s.add_argument("--report-a", required=True)
    s.add_argument("--report-b", required=True)
    s.add_argument("--no-swap", action="store_true", help="always show model A as user1")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_judge_prompts)

    s = sub.add_parser("judge-tally", parents=[common], help="tally judge responses")
    s.add_argument("--prompts", required=True)
    s.add_argument("--responses", required=True, help='JSONL of {"id": .., "response": ..}')
    s.add_argument("--figure")
    s.set_defaults(fn=cmd_judge_tally)

    s = sub.add_parser("gradcheck", parents=[common], help="finite differences vs backprop, whole model")
    s.add_argument("--dtype", choices=["f64", "f32"], default="f64")
    s.add_argument("--d-model", dest="d_model", type=int, default=32)
    s.add_argument("--samples", type=int, default=32, help="coordinates per tensor")
    s.set_defaults(fn=cmd_gradcheck)

    s = sub.add_parser("oracle-verify", parents=[common], help="oracles vs exhaustive enumeration")
    s.add_argument("--max-nodes", type=int, default=6)
    s.set_defaults(fn=cmd_oracle_verify)

    s = sub.add_parser("inspect-checkpoint", parents=[common], help="print a checkpoint manifest")
    s.add_argument("path")
    s.set_defaults(fn=cmd_inspect_checkpoint)

    s = sub.add_parser("trend", parents=[common], help="graph vs text accuracy as descriptions outgrow max_seq")
    s.add_argument("--max-seq", type=int, default=256)
    s.add_argument("--trend-graphs", type=int, default=1500)
    s.add_argument("--finetune-epochs", type=int, default=12)
    s.add_argument("--lm-epochs", type=int, default=4)
    s.add_argument("--out", help="directory for trend.json, the CSV table and the figure")
    s.set_defaults(fn=cmd_trend)
    return p


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s",
                        stream=sys.stderr, force=True)
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"graphllava {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except (GraphLlavaError, OSError, ValueError) as exc:
        print(f"graphllava {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
