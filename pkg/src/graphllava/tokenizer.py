"""Word-level tokenizer with reserved PAD/EOS/UNK/BOS ids."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import EmptyCorpus, IdOutOfRange

PAD, EOS, UNK, BOS = 0, 1, 2, 3
RESERVED = ("<pad>", "<eos>", "<unk>", "<bos>")

# tokens that must survive regardless of corpus frequency
FORCED_TOKENS = tuple(str(i) for i in range(100)) + ("SYSTEM", "USER", "ASSISTANT", ":", "###")

_PIECE_RE = re.compile(r"[A-Za-z0-9]+|[^A-Za-z0-9]+")


def split_tokens(text: str) -> list[str]:
    """Whitespace split, then each chunk into maximal alphanumeric / punctuation runs."""
    out: list[str] = []
    for chunk in text.split():
        out.extend(_PIECE_RE.findall(chunk))
    return out


@dataclass(frozen=True)
class Vocab:
    itos: tuple[str, ...]
    stoi: dict[str, int] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        if tuple(self.itos[:4]) != RESERVED:
            raise ValueError("vocabulary must start with the reserved header")
        table = {tok: i for i, tok in enumerate(self.itos)}
        if len(table) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")
        object.__setattr__(self, "stoi", table)

    def __len__(self) -> int:
        return len(self.itos)

    @property
    def size(self) -> int:
        return len(self.itos)

    def encode(self, text: str) -> list[int]:
        # split_tokens never yields a reserved string, so UNK is the only reserved id emitted
        return [self.stoi.get(t, UNK) for t in split_tokens(text)]

    def decode(self, ids: Sequence[int], skip_reserved: bool = False) -> str:
        parts = []
        for i in ids:
            i = int(i)
            if not 0 <= i < len(self.itos):
                raise IdOutOfRange(f"token id {i} outside vocabulary of size {len(self.itos)}")
            if skip_reserved and i in (PAD, EOS, BOS):
                continue
            parts.append(self.itos[i])
        return " ".join(parts)

    def count(self, text: str) -> int:
        return len(split_tokens(text))

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.itos) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(tuple(lines))


def build_vocab(corpus: Iterable[str], max_size: int = 8192, forced: Sequence[str] = FORCED_TOKENS) -> Vocab:
    """Keep the most frequent tokens; ties resolve by first appearance in the corpus."""
    counts: Counter[str] = Counter()
    first_seen: dict[str, int] = {}
    empty = True
    for text in corpus:
        empty = False
        for tok in split_tokens(text):
            if tok not in first_seen:
                first_seen[tok] = len(first_seen)
            counts[tok] += 1
    if empty:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
    tokens = list(dict.fromkeys(t for t in forced if t not in RESERVED))
    if len(tokens) + len(RESERVED) > max_size:
        raise ValueError(f"max_size {max_size} smaller than the forced token set")
    chosen = set(tokens)
    ranked = sorted(counts, key=lambda t: (-counts[t], first_seen[t]))
    for tok in ranked:
        if len(tokens) + len(RESERVED) >= max_size:
            break
        if tok not in chosen and tok not in RESERVED:
            tokens.append(tok)
            chosen.add(tok)
    return Vocab(RESERVED + tuple(tokens))


def token_frequencies(corpus: Iterable[str]) -> Counter[str]:
    c: Counter[str] = Counter()
    for text in corpus:
        c.update(split_tokens(text))
    return c
