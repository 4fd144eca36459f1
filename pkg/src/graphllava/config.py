"""Flat ``key = value`` run configuration shared by every subcommand."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import UsageError
from .graph_core import TaskType
from .model import DEFAULT_SYSTEM, ModelConfig
from .pipeline import TrainConfig


@dataclass
class CliConfig:
    seed: int = 0
    threads: int = 1
    # model
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128
    max_seq: int = 512
    d_g: int = 32
    g_layers: int = 2
    g_heads: int = 2
    rw_order: int = 4
    k_graph_tokens: int = 1
    lora_rank: int = 8
    lora_alpha: float = 16.0
    use_lora: bool = True
    graph_first: bool = False
    init_std: float = 0.02
    # training
    epochs: int = 3
    lr: float = 1e-3
    batch_size: int = 8
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    log_every: int = 0
    system_msg: str = DEFAULT_SYSTEM
    max_new: int = 24
    # data generation
    graphs: int = 200
    min_nodes: int = 3
    max_nodes: int = 20
    edge_prob_min: float = 0.0  # both 0 -> per-(task, n) calibrated p for label balance
    edge_prob_max: float = 0.0
    tasks: str = "cycle,connectivity,bipartite,hamilton"
    test_frac: float = 0.1
    token_budget: int = 512
    vocab_size: int = 8192
    # paths
    data: str = ""
    vocab: str = ""
    checkpoint: str = ""

    def __post_init__(self) -> None:
        if self.threads < 1:
            raise UsageError("threads must be >= 1")
        if not 0.0 <= self.test_frac < 1.0:
            raise UsageError("test_frac must be in [0, 1)")
        if self.min_nodes < 1 or self.max_nodes < self.min_nodes:
            raise UsageError("need 1 <= min_nodes <= max_nodes")
        if not 0.0 <= self.edge_prob_min <= self.edge_prob_max <= 1.0:
            raise UsageError("need 0 <= edge_prob_min <= edge_prob_max <= 1")
        self.task_types()

    def task_types(self) -> list[TaskType]:
        try:
            return [TaskType(t.strip()) for t in self.tasks.split(",") if t.strip()]
        except ValueError as exc:
            raise UsageError(f"unknown task in '{self.tasks}'") from exc

    def rng(self, label: str) -> np.random.Generator:
        """Independent stream for one subsystem, derived from the top-level seed and a fixed label."""
        return np.random.default_rng([self.seed, zlib.crc32(label.encode())])

    def model_config(self, vocab_size: int) -> ModelConfig:
        keys = {f.name for f in fields(ModelConfig)} - {"vocab_size"}
        return ModelConfig(vocab_size=vocab_size, **{k: getattr(self, k) for k in keys})

    def train_config(self, stage, **extra) -> TrainConfig:
        return TrainConfig(
            stage=stage, epochs=self.epochs, lr=self.lr, batch_size=self.batch_size, seed=self.seed,
            beta1=self.beta1, beta2=self.beta2, eps=self.adam_eps, weight_decay=self.weight_decay,
            system_msg=self.system_msg, answer_budget=self.max_new, log_every=self.log_every, **extra,
        )

    def render(self) -> str:
        return "\n".join(f"{f.name} = {getattr(self, f.name)}" for f in fields(self))


def _coerce(key: str, raw: str, kind):
    raw = raw.strip()
    try:
        if kind in (bool, "bool"):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind in (int, "int"):
            return int(raw)
        if kind in (float, "float"):
            return float(raw)
    except ValueError as exc:
        raise UsageError(f"bad value for '{key}': {raw!r}") from exc
    return raw


_KINDS = {f.name: f.type for f in fields(CliConfig)}


def parse_assignments(lines: Iterable[str], source: str = "<config>") -> dict:
    """``key = value`` lines, ``#`` starts a comment; unknown keys are an error."""
    out = {}
    for lineno, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise UsageError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in text.split("=", 1))
        if key not in _KINDS:
            raise UsageError(f"{source}:{lineno}: unknown config key '{key}'")
        out[key] = _coerce(key, value, _KINDS[key])
    return out


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> CliConfig:
    values = {}
    if path:
        text = Path(path).read_text(encoding="utf-8")
        values.update(parse_assignments(text.splitlines(), str(path)))
    for key, value in (overrides or {}).items():
        if key not in _KINDS:
            raise UsageError(f"unknown config key '{key}'")
        values[key] = _coerce(key, value, _KINDS[key]) if isinstance(value, str) else value
    return CliConfig(**values)
