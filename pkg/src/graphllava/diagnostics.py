"""Whole-model gradient check.

At the training init (std 0.02) most gradients are ~1e-9, below the noise
floor of a central difference, so the check runs on a *conditioned* copy of
the parameters: matrices at fan-in scale, embeddings and biases away from
zero, layernorm gains off 1, LoRA B nonzero. The code paths are the same; only
the numbers are large enough for finite differences to mean something.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .autodiff import GradCheckReport, grad_check
from .graph_core import Task, make_qa, random_graph
from .model import ModelConfig, ModelParams, init_params, sample_loss
from .tokenizer import Vocab, build_vocab

GRADCHECK_TOLERANCE = 1e-4


@dataclass
class ModelGradCheck:
    report: GradCheckReport
    seconds: float
    dtype: str

    @property
    def ok(self) -> bool:
        return self.report.max_rel_error <= GRADCHECK_TOLERANCE


def condition_params(params: ModelParams, seed: int = 0) -> None:
    """Rescale every tensor in place so gradients sit well above round-off; all become trainable."""
    rng = np.random.default_rng(seed)
    for name, t in params.items():
        t.requires_grad = True
        if "emb" in name or "edge_bias" in name:
            t.data[...] = rng.standard_normal(t.shape) * 0.5
        elif t.data.ndim == 2:
            t.data[...] = rng.standard_normal(t.shape) / np.sqrt(t.shape[0])
        elif name.endswith(".g"):
            t.data[...] = 1 + rng.standard_normal(t.shape) * 0.2
        else:
            t.data[...] = rng.standard_normal(t.shape) * 0.2


def probe_problem(seed: int = 0) -> tuple[Vocab, object, str, str]:
    g = random_graph(8, 0.4, seed + 1)
    query, answer = make_qa(g, Task.cycle())
    vocab = build_vocab([query, answer, "graphs"] + list(g.node_features))
    return vocab, g, "Is there a cycle in this graph?", answer


def model_gradcheck(dtype: str = "f64", d_model: int = 32, n_layers: int = 2, seed: int = 0,
                    samples_per_tensor: int = 32, h: float | None = None) -> ModelGradCheck:
    """Central differences vs backprop over graph encoder, projection, decoder and LoRA together."""
    np_dtype = {"f64": np.float64, "f32": np.float32}[dtype]
    vocab, g, question, answer = probe_problem(seed)
    cfg = ModelConfig(
        vocab_size=vocab.size, d_model=d_model, n_layers=n_layers, n_heads=4, d_ff=2 * d_model, max_seq=128,
        d_g=16, g_layers=2, g_heads=2, k_graph_tokens=2, seed=seed,
    )
    params = init_params(cfg, np_dtype)
    condition_params(params, seed)
    step = h if h is not None else (1e-5 if np_dtype is np.float64 else 1e-2)
    t0 = time.time()
    rep = grad_check(lambda: sample_loss(params, vocab, question, answer, g, system_msg="graphs"),
                     params.tensors, h=step, samples_per_tensor=samples_per_tensor, seed=seed)
    return ModelGradCheck(rep, time.time() - t0, dtype)
