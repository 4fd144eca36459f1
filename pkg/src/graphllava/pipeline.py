"""Training stages, checkpoints and freeze verification."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import AdamW, Tensor
from .datasets import InstructionSample
from .errors import (
    CensusMismatch,
    ChecksumMismatch,
    DatasetStageMismatch,
    NonFiniteLoss,
    VersionMismatch,
)
from .graph_core import render_description
from .model import (
    DEFAULT_SYSTEM,
    ModelConfig,
    ModelParams,
    Stage,
    add_pretrain_head,
    assemble,
    encode_graph,
    forward_loss,
    project_graph,
    lm_loss,
    prompt_ids,
    set_trainable,
)
from .tokenizer import BOS, EOS, Vocab

FORMAT_VERSION = 1


@dataclass
class TrainConfig:
    stage: Stage = Stage.ALIGN
    epochs: int = 3
    lr: float = 1e-3
    batch_size: int = 8
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    text_mode: bool = False  # train the text-only baseline (no graph rows, description in the prompt)
    system_msg: str = DEFAULT_SYSTEM
    answer_budget: int = 24
    log_every: int = 0
    metrics_csv: str | None = None

    def __post_init__(self) -> None:
        self.stage = Stage(self.stage)
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stage"] = self.stage.value
        return d


@dataclass
class StageResult:
    params: ModelParams
    epoch_losses: list[float] = field(default_factory=list)
    step_losses: list[float] = field(default_factory=list)


# ---------------------------------------------------------------- prompt construction


def text_mode_query(vocab: Vocab, params: ModelParams, sample: InstructionSample, system_msg: str,
                    reserve: int) -> list[int]:
    """Description + question, cut from the right so the prompt leaves ``reserve`` free positions."""
    ids = vocab.encode(f"{render_description(sample.graph)} {sample.query}")
    head, marker, _ = prompt_ids(vocab, system_msg, [])
    room = params.config.max_seq - len(head) - len(marker) - reserve
    return ids[: max(room, 0)]


def lm_window(vocab: Vocab, sample: InstructionSample, max_seq: int, rng: np.random.Generator) -> list[int]:
    """``BOS description question answer EOS``; a random ``max_seq + 1`` slice when it is longer."""
    text = sample.answer if sample.is_describe else f"{render_description(sample.graph)} {sample.query} {sample.answer}"
    ids = [BOS] + vocab.encode(text) + [EOS]
    if len(ids) <= max_seq + 1:
        return ids
    start = int(rng.integers(0, len(ids) - max_seq))
    return ids[start:start + max_seq + 1]


def _check_stage_data(stage: Stage, samples: Sequence[InstructionSample]) -> None:
    if stage is Stage.LM_PRETRAIN:
        return
    want_describe = stage in (Stage.ENCODER_PRETRAIN, Stage.ALIGN)
    for i, s in enumerate(samples):
        if s.is_describe != want_describe:
            kind = "describe" if want_describe else "task"
            raise DatasetStageMismatch(f"sample {i} is not a {kind} sample, required by stage {stage.value}")


class LossFn:
    """Builds per-sample losses for one stage, caching graph embeddings while the encoder is frozen."""

    def __init__(self, params: ModelParams, vocab: Vocab, config: TrainConfig):
        self.params = params
        self.vocab = vocab
        self.config = config
        self.prefix = "w0" if config.stage is Stage.ENCODER_PRETRAIN else "w"
        self._z_cache: dict[int, Tensor] = {}
        self.rng = np.random.default_rng([config.seed, 17])

    def graph_embedding(self, idx: int, sample: InstructionSample) -> Tensor:
        phi_frozen = not any(self.params[n].requires_grad for n in self.params.group("phi"))
        if not phi_frozen:
            return encode_graph(self.params, sample.graph, self.vocab)
        if idx not in self._z_cache:
            with ad.no_grad():
                self._z_cache[idx] = encode_graph(self.params, sample.graph, self.vocab)
        return self._z_cache[idx]

    def __call__(self, idx: int, sample: InstructionSample) -> Tensor:
        cfg = self.config
        if cfg.stage is Stage.LM_PRETRAIN:
            return lm_loss(self.params, lm_window(self.vocab, sample, self.params.config.max_seq, self.rng))
        answer = self.vocab.encode(sample.answer)
        if cfg.text_mode:
            query = text_mode_query(self.vocab, self.params, sample, cfg.system_msg, len(answer) + 1)
            h = None
        else:
            query = self.vocab.encode(sample.query)
            h = project_graph(self.params, self.graph_embedding(idx, sample), self.prefix)
        a = assemble(self.params, self.vocab, cfg.system_msg, query, h, answer)
        return forward_loss(self.params, a)


def run_stage(
    config: TrainConfig,
    params: ModelParams,
    samples: Sequence[InstructionSample],
    vocab: Vocab,
    log: Callable[[str], None] | None = None,
) -> StageResult:
    """Train ``params`` in place for one stage and return the loss curve."""
    stage = config.stage
    _check_stage_data(stage, samples)
    if not samples:
        raise DatasetStageMismatch("empty dataset")
    if stage is Stage.ENCODER_PRETRAIN and not params.group("w0"):
        add_pretrain_head(params)
    if config.text_mode and stage is not Stage.FINETUNE:
        raise DatasetStageMismatch("text mode only applies to the finetune stage")
    set_trainable(params, stage)
    opt = AdamW(params.tensors, lr=config.lr, betas=(config.beta1, config.beta2), eps=config.eps,
                weight_decay=config.weight_decay)
    loss_fn = LossFn(params, vocab, config)
    rng = np.random.default_rng(config.seed)
    result = StageResult(params)
    writer = None
    fh = None
    if config.metrics_csv:
        fh = open(config.metrics_csv, "w", newline="", encoding="utf-8")
        writer = csv.writer(fh)
        writer.writerow(["step", "epoch", "loss"])
    step = 0
    try:
        for epoch in range(config.epochs):
            order = rng.permutation(len(samples))
            total = 0.0
            for start in range(0, len(order), config.batch_size):
                batch = order[start:start + config.batch_size]
                opt.zero_grad()
                batch_loss = 0.0
                for idx in batch:
                    loss = loss_fn(int(idx), samples[int(idx)])
                    value = float(loss.data)
                    if not math.isfinite(value):
                        raise NonFiniteLoss(step, value)
                    ad.scale(loss, 1.0 / len(batch)).backward()
                    batch_loss += value
                opt.step()
                step += 1
                total += batch_loss
                mean_batch = batch_loss / len(batch)
                result.step_losses.append(mean_batch)
                if writer is not None:
                    writer.writerow([step, epoch, f"{mean_batch:.6f}"])
                if log and config.log_every and step % config.log_every == 0:
                    log(f"step {step} epoch {epoch} loss {mean_batch:.4f}")
            result.epoch_losses.append(total / len(samples))
            if log:
                log(f"epoch {epoch} mean_loss {result.epoch_losses[-1]:.4f}")
    finally:
        if fh is not None:
            fh.close()
    opt.zero_grad()
    params.history.append(stage.value + ("+text" if config.text_mode else ""))
    return result


# ---------------------------------------------------------------- freeze checks


def stage_trainable_names(params: ModelParams, stage: Stage | str) -> set[str]:
    """Trainable set of a stage, recomputed from the name census (no tensor flags consulted)."""
    stage = Stage(stage)
    names = set()
    for n in params:
        group = n.split(".", 1)[0]
        if stage is Stage.LM_PRETRAIN and group in ("eps", "theta"):
            names.add(n)
        elif stage is Stage.ENCODER_PRETRAIN and group in ("phi", "w0"):
            names.add(n)
        elif stage is Stage.ALIGN and group == "w":
            names.add(n)
        elif stage is Stage.FINETUNE and (group in ("w", "eps", "lora") or (group == "theta" and ".ln" in n)):
            names.add(n)
    return names


def verify_freeze(before: dict[str, bytes] | ModelParams, after: ModelParams, stage: Stage | str) -> list[str]:
    """Names of tensors outside the stage's trainable set whose bytes changed (empty = pass)."""
    snap = before.snapshot() if isinstance(before, ModelParams) else before
    if set(snap) != set(after.tensors):
        diff = sorted(set(snap) ^ set(after.tensors))
        raise CensusMismatch(f"parameter census differs: {diff[:5]}")
    allowed = stage_trainable_names(after, stage)
    return [n for n in after if n not in allowed and after[n].data.tobytes() != snap[n]]


# ---------------------------------------------------------------- checkpoints


@dataclass
class Checkpoint:
    params: ModelParams
    train_config: dict
    vocab: Vocab | None
    manifest: dict


def save_checkpoint(params: ModelParams, path: str | Path, train_config: TrainConfig | dict | None = None,
                    vocab: Vocab | None = None) -> None:
    """Write ``manifest.json`` plus a little-endian f32 ``params.bin`` into directory ``path``.

    The throwaway encoder-pretraining projection is never saved.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = []
    blobs = []
    offset = 0
    for name, t in params.items():
        if name.split(".", 1)[0] == "w0":
            continue
        raw = np.ascontiguousarray(t.data, dtype="<f4").tobytes()
        entries.append({"name": name, "shape": list(t.shape), "dtype": "f32", "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    blob = b"".join(blobs)
    if isinstance(train_config, TrainConfig):
        train_config = train_config.to_dict()
    manifest = {
        "format_version": FORMAT_VERSION,
        "model_config": params.config.to_dict(),
        "train_config": train_config or {},
        "history": list(params.history),
        "tensors": entries,
        "blob_bytes": len(blob),
        "checksum": hashlib.sha256(blob).hexdigest(),
        "vocab": list(vocab.itos) if vocab is not None else None,
    }
    (path / "params.bin").write_bytes(blob)
    (path / "manifest.json").write_text(json.dumps(manifest, indent=1), encoding="utf-8")


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text(encoding="utf-8"))
    if manifest.get("format_version") != FORMAT_VERSION:
        raise VersionMismatch(f"checkpoint format {manifest.get('format_version')} != {FORMAT_VERSION}")
    blob = (path / "params.bin").read_bytes()
    if len(blob) != manifest["blob_bytes"] or hashlib.sha256(blob).hexdigest() != manifest["checksum"]:
        raise ChecksumMismatch(f"params.bin does not match the manifest checksum in {path}")
    config = ModelConfig.from_dict(manifest["model_config"])
    params = ModelParams(config, history=list(manifest.get("history", [])))
    for e in manifest["tensors"]:
        arr = np.frombuffer(blob, dtype="<f4", count=int(np.prod(e["shape"], dtype=np.int64)), offset=e["offset"])
        params.tensors[e["name"]] = Tensor(arr.reshape(e["shape"]).astype(np.float32), name=e["name"])
    vocab = Vocab(tuple(manifest["vocab"])) if manifest.get("vocab") else None
    return Checkpoint(params, manifest.get("train_config", {}), vocab, manifest)
