"""GraphLlava network: decoder LM, pooled graph encoder, projection MLP and LoRA adapters.

Parameter names carry their group as a prefix:

``eps.``   token embedding table (also the tied output head)
``theta.`` decoder body: positional table, blocks, final layernorm
``phi.``   graph encoder
``w.``     graph-to-text projection (2-layer GELU MLP)
``lora.``  low-rank adapters on the decoder q/k projections
``w0.``    throwaway projection used only while pretraining the encoder
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from typing import Iterator, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import IdOutOfRange, SequenceTooLong, ShapeMismatch
from .graph_core import Graph
from .tokenizer import BOS, EOS, PAD, UNK, Vocab

GROUPS = ("eps", "theta", "phi", "w", "lora", "w0")
DEFAULT_SYSTEM = "You are a helpful assistant that answers questions about graphs."


@dataclass
class ModelConfig:
    vocab_size: int
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
    seed: int = 0

    def __post_init__(self) -> None:
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if self.d_g % self.g_heads:
            raise ValueError("d_g must be divisible by g_heads")
        if self.k_graph_tokens < 1:
            raise ValueError("k_graph_tokens must be >= 1")
        if self.max_seq < self.k_graph_tokens + 8:
            raise ValueError("max_seq must be >= k_graph_tokens + 8")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


class Stage(str, Enum):
    LM_PRETRAIN = "lm_pretrain"  # optional base-decoder language modelling, before any graph stage
    ENCODER_PRETRAIN = "encoder_pretrain"
    ALIGN = "align"
    FINETUNE = "finetune"


@dataclass
class ModelParams:
    config: ModelConfig
    tensors: dict[str, Tensor] = field(default_factory=dict)
    history: list[str] = field(default_factory=list)  # stages run so far, in order

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def items(self):
        return self.tensors.items()

    def group(self, group: str) -> list[str]:
        return [n for n in self.tensors if n.split(".", 1)[0] == group]

    def trainable(self) -> list[str]:
        return [n for n, t in self.tensors.items() if t.requires_grad]

    def astype(self, dtype) -> "ModelParams":
        out = ModelParams(self.config, history=list(self.history))
        for n, t in self.tensors.items():
            out.tensors[n] = Tensor(t.data.astype(dtype), requires_grad=t.requires_grad, name=n)
        return out

    def copy(self) -> "ModelParams":
        return self.astype(self.dtype)

    @property
    def dtype(self):
        return self.tensors["eps.tok_emb"].dtype

    def snapshot(self) -> dict[str, bytes]:
        return {n: t.data.tobytes() for n, t in self.tensors.items()}

    def drop_group(self, group: str) -> None:
        for n in self.group(group):
            del self.tensors[n]


# ---------------------------------------------------------------- init


def init_params(config: ModelConfig, dtype=np.float32, with_pretrain_head: bool = False) -> ModelParams:
    rng = np.random.default_rng(config.seed)
    c = config
    p = ModelParams(c)

    def normal(name, *shape):
        p.tensors[name] = Tensor((rng.standard_normal(shape) * c.init_std).astype(dtype), name=name)

    def const(name, value, *shape):
        p.tensors[name] = Tensor(np.full(shape, value, dtype=dtype), name=name)

    normal("eps.tok_emb", c.vocab_size, c.d_model)
    normal("theta.pos_emb", c.max_seq, c.d_model)
    for i in range(c.n_layers):
        pre = f"theta.layers.{i}"
        const(f"{pre}.ln1.g", 1.0, c.d_model)
        const(f"{pre}.ln1.b", 0.0, c.d_model)
        for proj in ("wq", "wk", "wv", "wo"):
            normal(f"{pre}.attn.{proj}", c.d_model, c.d_model)
        const(f"{pre}.ln2.g", 1.0, c.d_model)
        const(f"{pre}.ln2.b", 0.0, c.d_model)
        normal(f"{pre}.mlp.w1", c.d_model, c.d_ff)
        const(f"{pre}.mlp.b1", 0.0, c.d_ff)
        normal(f"{pre}.mlp.w2", c.d_ff, c.d_model)
        const(f"{pre}.mlp.b2", 0.0, c.d_model)
    const("theta.ln_f.g", 1.0, c.d_model)
    const("theta.ln_f.b", 0.0, c.d_model)

    n_struct = c.rw_order + 1
    normal("phi.tok_emb", c.vocab_size, c.d_g)
    normal("phi.feat_proj", c.d_g, c.d_g)
    normal("phi.struct_proj", n_struct, c.d_g)
    const("phi.in_bias", 0.0, c.d_g)
    for i in range(c.g_layers):
        pre = f"phi.layers.{i}"
        const(f"{pre}.ln1.g", 1.0, c.d_g)
        const(f"{pre}.ln1.b", 0.0, c.d_g)
        for proj in ("wq", "wk", "wv", "wo"):
            normal(f"{pre}.attn.{proj}", c.d_g, c.d_g)
        normal(f"{pre}.attn.edge_bias", 3, c.g_heads)
        const(f"{pre}.ln2.g", 1.0, c.d_g)
        const(f"{pre}.ln2.b", 0.0, c.d_g)
        normal(f"{pre}.mlp.w1", c.d_g, 2 * c.d_g)
        const(f"{pre}.mlp.b1", 0.0, 2 * c.d_g)
        normal(f"{pre}.mlp.w2", 2 * c.d_g, c.d_g)
        const(f"{pre}.mlp.b2", 0.0, c.d_g)
    const("phi.ln_f.g", 1.0, c.d_g)
    const("phi.ln_f.b", 0.0, c.d_g)
    if c.k_graph_tokens > 1:
        normal("phi.pool", c.d_g, c.k_graph_tokens * c.d_g)

    _init_projection(p, "w", rng, dtype)
    for i in range(c.n_layers):
        for which in ("q", "k"):
            # A at fan-in scale (as usual for LoRA); B = 0 keeps the adapter a no-op at start
            a = rng.standard_normal((c.d_model, c.lora_rank)) / math.sqrt(c.d_model)
            p.tensors[f"lora.layers.{i}.A_{which}"] = Tensor(a.astype(dtype), name=f"lora.layers.{i}.A_{which}")
            const(f"lora.layers.{i}.B_{which}", 0.0, c.lora_rank, c.d_model)
    if with_pretrain_head:
        add_pretrain_head(p)
    return p


def _init_projection(p: ModelParams, prefix: str, rng: np.random.Generator, dtype) -> None:
    c = p.config
    p.tensors[f"{prefix}.fc1"] = Tensor((rng.standard_normal((c.d_g, c.d_model)) * c.init_std).astype(dtype))
    p.tensors[f"{prefix}.b1"] = Tensor(np.zeros(c.d_model, dtype=dtype))
    p.tensors[f"{prefix}.fc2"] = Tensor((rng.standard_normal((c.d_model, c.d_model)) * c.init_std).astype(dtype))
    p.tensors[f"{prefix}.b2"] = Tensor(np.zeros(c.d_model, dtype=dtype))


def add_pretrain_head(p: ModelParams) -> None:
    """Attach the throwaway ``w0`` projection used while pretraining the encoder."""
    rng = np.random.default_rng(p.config.seed + 7919)
    _init_projection(p, "w0", rng, p.dtype)


def set_trainable(params: ModelParams, stage: Stage | str) -> list[str]:
    """Set ``requires_grad`` to exactly the stage's trainable set and return those names."""
    stage = Stage(stage)
    for name, t in params.items():
        group = name.split(".", 1)[0]
        if stage is Stage.LM_PRETRAIN:
            flag = group in ("eps", "theta")
        elif stage is Stage.ENCODER_PRETRAIN:
            flag = group in ("phi", "w0")
        elif stage is Stage.ALIGN:
            flag = group == "w"
        else:
            flag = group in ("w", "eps", "lora") or (group == "theta" and ".ln" in name)
        t.requires_grad = flag
        t.grad = None
    return params.trainable()


# ---------------------------------------------------------------- text side


def embed_text(params: ModelParams, ids: Sequence[int], offset: int = 0) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    c = params.config
    if ids.size and (ids.min() < 0 or ids.max() >= c.vocab_size):
        raise IdOutOfRange(f"token id outside 0..{c.vocab_size - 1}")
    if offset + ids.size > c.max_seq:
        raise SequenceTooLong(f"{offset + ids.size} positions exceed max_seq {c.max_seq}")
    tok = ad.embedding(params["eps.tok_emb"], ids)
    pos = ad.embedding(params["theta.pos_emb"], np.arange(offset, offset + ids.size))
    return ad.add(tok, pos)


def _attention(x: Tensor, wq: Tensor, wk: Tensor, wv: Tensor, wo: Tensor, n_heads: int,
               q_extra: Tensor | None = None, k_extra: Tensor | None = None,
               bias: Tensor | None = None, causal: bool = False) -> Tensor:
    t, d = x.shape
    dh = d // n_heads
    q = ad.matmul(x, wq)
    k = ad.matmul(x, wk)
    if q_extra is not None:
        q = ad.add(q, q_extra)
    if k_extra is not None:
        k = ad.add(k, k_extra)
    v = ad.matmul(x, wv)

    def heads(z):
        return ad.transpose(ad.reshape(z, (t, n_heads, dh)), (1, 0, 2))

    qh, kh, vh = heads(q), heads(k), heads(v)
    scores = ad.scale(ad.matmul(qh, ad.transpose(kh, (0, 2, 1))), 1.0 / math.sqrt(dh))
    if bias is not None:
        scores = ad.add(scores, bias)
    if causal:
        scores = ad.masked_fill(scores, np.triu(np.ones((t, t), dtype=bool), k=1), -np.inf)
    att = ad.softmax(scores, axis=-1)
    out = ad.reshape(ad.transpose(ad.matmul(att, vh), (1, 0, 2)), (t, d))
    return ad.matmul(out, wo)


def _mlp(x: Tensor, params: ModelParams, pre: str) -> Tensor:
    h = ad.gelu(ad.add(ad.matmul(x, params[f"{pre}.w1"]), params[f"{pre}.b1"]))
    return ad.add(ad.matmul(h, params[f"{pre}.w2"]), params[f"{pre}.b2"])


def decoder_logits(params: ModelParams, x: Tensor, use_lora: bool | None = None) -> Tensor:
    """Causal decoder over an embedded sequence ``x`` [T, d_model] -> logits [T, vocab]."""
    c = params.config
    use_lora = c.use_lora if use_lora is None else use_lora
    s = c.lora_alpha / c.lora_rank
    for i in range(c.n_layers):
        pre = f"theta.layers.{i}"
        h = ad.layer_norm(x, params[f"{pre}.ln1.g"], params[f"{pre}.ln1.b"])
        q_extra = k_extra = None
        if use_lora:
            lp = f"lora.layers.{i}"
            q_extra = ad.scale(ad.matmul(ad.matmul(h, params[f"{lp}.A_q"]), params[f"{lp}.B_q"]), s)
            k_extra = ad.scale(ad.matmul(ad.matmul(h, params[f"{lp}.A_k"]), params[f"{lp}.B_k"]), s)
        x = ad.add(x, _attention(
            h, params[f"{pre}.attn.wq"], params[f"{pre}.attn.wk"], params[f"{pre}.attn.wv"],
            params[f"{pre}.attn.wo"], c.n_heads, q_extra, k_extra, causal=True,
        ))
        h = ad.layer_norm(x, params[f"{pre}.ln2.g"], params[f"{pre}.ln2.b"])
        x = ad.add(x, _mlp(h, params, f"{pre}.mlp"))
    x = ad.layer_norm(x, params["theta.ln_f.g"], params["theta.ln_f.b"])
    return ad.matmul(x, ad.transpose(params["eps.tok_emb"], (1, 0)))


# ---------------------------------------------------------------- graph side


def structural_features(g: Graph, order: int, dtype=np.float64) -> np.ndarray:
    """Random-walk return probabilities diag((D^-1 A)^t), t = 1..order, plus degree / (n - 1)."""
    a = g.adjacency(np.float64)
    deg = a.sum(axis=1)
    walk = np.divide(a, deg[:, None], out=np.zeros_like(a), where=deg[:, None] > 0)
    feats = np.zeros((g.num_nodes, order + 1))
    power = np.eye(g.num_nodes)
    for t in range(order):
        power = power @ walk
        feats[:, t] = np.diag(power)
    feats[:, order] = deg / max(g.num_nodes - 1, 1)
    return feats.astype(dtype)


def node_feature_ids(g: Graph, vocab: Vocab) -> list[list[int]]:
    return [vocab.encode(f) for f in g.node_features]


def _node_feature_means(params: ModelParams, ids: list[list[int]]) -> Tensor:
    table = params["phi.tok_emb"]
    lengths = {len(x) for x in ids}
    if len(lengths) == 1 and 0 not in lengths:
        return ad.mean(ad.embedding(table, np.asarray(ids, dtype=np.int64)), axis=1)
    flat = [i for x in ids for i in x]
    avg = np.zeros((len(ids), max(len(flat), 1)), dtype=table.dtype)
    col = 0
    for row, x in enumerate(ids):
        if x:
            avg[row, col:col + len(x)] = 1.0 / len(x)
        col += len(x)
    if not flat:
        return Tensor(np.zeros((len(ids), table.shape[1]), dtype=table.dtype))
    return ad.matmul(Tensor(avg), ad.embedding(table, np.asarray(flat, dtype=np.int64)))


def encode_graph(params: ModelParams, g: Graph, vocab: Vocab) -> Tensor:
    """Graph encoder with mean pooling -> Z_G of shape [k_graph_tokens, d_g]."""
    c = params.config
    dtype = params.dtype
    feats = _node_feature_means(params, node_feature_ids(g, vocab))
    struct = Tensor(structural_features(g, c.rw_order, dtype))
    x = ad.add(ad.add(ad.matmul(feats, params["phi.feat_proj"]), ad.matmul(struct, params["phi.struct_proj"])),
               params["phi.in_bias"])
    pair_class = g.adjacency(np.float64).astype(np.int64)
    np.fill_diagonal(pair_class, 2)
    for i in range(c.g_layers):
        pre = f"phi.layers.{i}"
        bias = ad.transpose(ad.embedding(params[f"{pre}.attn.edge_bias"], pair_class), (2, 0, 1))
        h = ad.layer_norm(x, params[f"{pre}.ln1.g"], params[f"{pre}.ln1.b"])
        x = ad.add(x, _attention(
            h, params[f"{pre}.attn.wq"], params[f"{pre}.attn.wk"], params[f"{pre}.attn.wv"],
            params[f"{pre}.attn.wo"], c.g_heads, bias=bias,
        ))
        h = ad.layer_norm(x, params[f"{pre}.ln2.g"], params[f"{pre}.ln2.b"])
        x = ad.add(x, _mlp(h, params, f"{pre}.mlp"))
    x = ad.layer_norm(x, params["phi.ln_f.g"], params["phi.ln_f.b"])
    if c.k_graph_tokens > 1:
        x = ad.matmul(x, params["phi.pool"])
    pooled = ad.mean(x, axis=0)
    return ad.reshape(pooled, (c.k_graph_tokens, c.d_g))


def project_graph(params: ModelParams, z: Tensor, prefix: str = "w") -> Tensor:
    c = params.config
    if z.ndim != 2 or z.shape[1] != c.d_g:
        raise ShapeMismatch(f"project_graph expects [k, {c.d_g}], got {z.shape}")
    h = ad.gelu(ad.add(ad.matmul(z, params[f"{prefix}.fc1"]), params[f"{prefix}.b1"]))
    return ad.add(ad.matmul(h, params[f"{prefix}.fc2"]), params[f"{prefix}.b2"])


# ---------------------------------------------------------------- assembly / loss


@dataclass
class AssembledInput:
    embeddings: Tensor
    target_ids: np.ndarray
    loss_mask: np.ndarray
    graph_span: tuple[int, int] | None
    query_span: tuple[int, int]
    answer_start: int

    @property
    def length(self) -> int:
        return int(self.target_ids.shape[0])


def prompt_ids(vocab: Vocab, system_msg: str, query_ids: Sequence[int]) -> tuple[list[int], list[int], list[int]]:
    """Token pieces around the graph slot: (before graph, after graph, query span inside 'before')."""
    head = [BOS] + vocab.encode(f"SYSTEM: {system_msg}") + [EOS] + vocab.encode("USER:")
    q0 = len(head)
    head = head + list(query_ids) + [EOS]
    return head, vocab.encode("ASSISTANT:"), [q0, q0 + len(query_ids)]


def assemble(params: ModelParams, vocab: Vocab, system_msg: str, query_ids: Sequence[int],
             h_graph: Tensor | None, answer_ids: Sequence[int] | None = None,
             answer_prefix: Sequence[int] = ()) -> AssembledInput:
    """Lay out ``SYSTEM: .. EOS USER: X_q EOS [H_G] ASSISTANT: X_a EOS`` as one embedding sequence.

    ``answer_prefix`` (generation only) appends already decoded tokens after the
    assistant marker without an EOS and with an all-zero mask.
    """
    c = params.config
    head, marker, qspan = prompt_ids(vocab, system_msg, query_ids)
    k = 0 if h_graph is None else h_graph.shape[0]
    if c.graph_first and h_graph is not None:
        # graph rows right after the USER marker, before the query text
        user_end = qspan[0]
        pre_ids, mid_ids = head[:user_end], head[user_end:]
        qspan = [qspan[0] + k, qspan[1] + k]
    else:
        pre_ids, mid_ids = head, []
    tail = list(marker)
    mask_tail = [0] * len(marker)
    if answer_ids is not None:
        tail += list(answer_ids) + [EOS]
        mask_tail += [1] * (len(answer_ids) + 1)
    else:
        tail += list(answer_prefix)
        mask_tail += [0] * len(answer_prefix)
    total = len(pre_ids) + k + len(mid_ids) + len(tail)
    if total > c.max_seq:
        raise SequenceTooLong(f"assembled length {total} exceeds max_seq {c.max_seq}")

    ids = np.asarray(pre_ids + [PAD] * k + mid_ids + tail, dtype=np.int64)
    table = params["eps.tok_emb"]
    pieces = [ad.embedding(table, np.asarray(pre_ids, dtype=np.int64))]
    if h_graph is not None:
        if h_graph.ndim != 2 or h_graph.shape[1] != c.d_model:
            raise ShapeMismatch(f"H_G must be [k, {c.d_model}], got {h_graph.shape}")
        pieces.append(h_graph)
    for part in (mid_ids, tail):
        if part:
            pieces.append(ad.embedding(table, np.asarray(part, dtype=np.int64)))
    seq = ad.concat(pieces, axis=0)
    seq = ad.add(seq, ad.embedding(params["theta.pos_emb"], np.arange(total)))
    mask = np.asarray([0] * (total - len(mask_tail)) + mask_tail, dtype=np.int64)
    graph_span = (len(pre_ids), len(pre_ids) + k) if h_graph is not None else None
    return AssembledInput(seq, ids, mask, graph_span, (qspan[0], qspan[1]), total - len(tail) + len(marker))


def shifted_targets(assembled: AssembledInput) -> tuple[np.ndarray, np.ndarray]:
    """Position i predicts token i+1; the mask is read at the target position."""
    ids, mask = assembled.target_ids, assembled.loss_mask
    tgt = np.zeros_like(ids)
    m = np.zeros_like(mask)
    tgt[:-1] = ids[1:]
    m[:-1] = mask[1:]
    return tgt, m


def forward_loss(params: ModelParams, assembled: AssembledInput, use_lora: bool | None = None) -> Tensor:
    logits = decoder_logits(params, assembled.embeddings, use_lora)
    tgt, m = shifted_targets(assembled)
    return ad.masked_cross_entropy(logits, tgt, m)


def lm_loss(params: ModelParams, ids: Sequence[int]) -> Tensor:
    """Plain next-token loss over every position of ``ids`` (at most max_seq + 1 tokens)."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size < 2:
        raise ValueError("language-model loss needs at least two tokens")
    logits = decoder_logits(params, embed_text(params, ids[:-1]), use_lora=False)
    return ad.masked_cross_entropy(logits, ids[1:], np.ones(ids.size - 1, dtype=np.int64))


def per_position_ce(params: ModelParams, assembled: AssembledInput) -> np.ndarray:
    """Per-position next-token CE (0 where the shifted mask is 0); an oracle for the masked mean."""
    with ad.no_grad():
        logits = decoder_logits(params, assembled.embeddings).data
    tgt, m = shifted_targets(assembled)
    lp = ad.tensor.log_softmax_np(logits)
    ce = -lp[np.arange(len(tgt)), tgt]
    return np.where(m == 1, ce, 0.0)


def graph_tokens(params: ModelParams, g: Graph, vocab: Vocab, prefix: str = "w") -> Tensor:
    return project_graph(params, encode_graph(params, g, vocab), prefix)


def sample_loss(params: ModelParams, vocab: Vocab, query: str, answer: str, graph: Graph | None,
                system_msg: str = DEFAULT_SYSTEM, z_graph: Tensor | None = None, prefix: str = "w") -> Tensor:
    """Loss of one (graph, X_q, X_a) triple; ``z_graph`` short-circuits a frozen encoder."""
    h = None
    if graph is not None or z_graph is not None:
        z = z_graph if z_graph is not None else encode_graph(params, graph, vocab)
        h = project_graph(params, z, prefix)
    a = assemble(params, vocab, system_msg, vocab.encode(query), h, vocab.encode(answer))
    return forward_loss(params, a)


# ---------------------------------------------------------------- generation

_BANNED = (PAD, BOS, UNK)


def generate(params: ModelParams, vocab: Vocab, system_msg: str, query: str | Sequence[int],
             graph: Graph | None, max_new: int = 24, h_graph: Tensor | None = None) -> str:
    """Greedy decoding (lowest id wins ties) until EOS or ``max_new`` tokens."""
    q_ids = vocab.encode(query) if isinstance(query, str) else list(query)
    out: list[int] = []
    with ad.no_grad():
        if h_graph is None and graph is not None:
            h_graph = graph_tokens(params, graph, vocab)
        probe = assemble(params, vocab, system_msg, q_ids, h_graph)
        if probe.length + max_new > params.config.max_seq:
            raise SequenceTooLong(
                f"prompt of {probe.length} tokens leaves no room for {max_new} new tokens in {params.config.max_seq}"
            )
        for _ in range(max_new):
            a = assemble(params, vocab, system_msg, q_ids, h_graph, answer_prefix=out)
            logits = decoder_logits(params, a.embeddings).data[-1].copy()
            logits[list(_BANNED)] = -np.inf
            nxt = int(np.argmax(logits))
            if nxt == EOS:
                break
            out.append(nxt)
    return vocab.decode(out)
