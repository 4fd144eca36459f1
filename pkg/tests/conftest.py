import numpy as np
import pytest
from hypothesis import settings

from graphllava.graph_core import Graph, parse_description
from graphllava.model import DEFAULT_SYSTEM, ModelConfig, init_params
from graphllava.tokenizer import build_vocab

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

EIGHT_NODE_TEXT = "The nodes are numbered from 0 to 7, and the edges are: (0, 6) (0, 7) (0, 2) (0, 3) (0, 5) (1, 4) (1, 2) (1, 7) (2, 4) (2, 6) (2, 3) (3, 6) (5, 7) (5, 6) (6, 7)."

FORTY_FIVE_NODE_TEXT = "The nodes are numbered from 0 to 44, and the edges are: (0, 13) (0, 18) (0, 1) (0, 42) (1, 21) (1, 36) (1, 27) (2, 5) (2, 17) (3, 15) (5, 22) (5, 20) (5, 38) (5, 26) (5, 31) (5, 30) (6, 14) (6, 22) (6, 18) (6, 12) (7, 22) (8, 28) (9, 41) (9, 10) (9, 43) (9, 19) (12, 35) (13, 42) (14, 15) (14, 22) (15, 26) (16, 36) (17, 25) (18, 40) (19, 41) (19, 21) (19, 34) (19, 39) (21, 36) (21, 32) (24, 41) (24, 33) (26, 37) (26, 39) (26, 28) (29, 32) (29, 41) (31, 33) (32, 42) (32, 37) (32, 36) (33, 35) (34, 41) (35, 39) (35, 43) (38, 40) (41, 43)."


@pytest.fixture(scope="session")
def eight_node() -> Graph:
    return parse_description(EIGHT_NODE_TEXT)


@pytest.fixture(scope="session")
def forty_five_node() -> Graph:
    return parse_description(FORTY_FIVE_NODE_TEXT)


def tiny_setup(d_model=16, max_seq=96, dtype=np.float64, seed=0, **kw):
    """Small vocabulary + model big enough for the graph questions used in tests."""
    from graphllava.graph_core import QUESTION_TEMPLATES, ANSWER_TEMPLATES

    corpus = [DEFAULT_SYSTEM, "graphs", "This is node"] + list(QUESTION_TEMPLATES.values())
    corpus += list(ANSWER_TEMPLATES.values()) + ["### Yes. ### No. The nodes are numbered from 0 to , and the edges are: ( , ) ."]
    vocab = build_vocab(corpus)
    cfg = ModelConfig(vocab_size=vocab.size, d_model=d_model, n_heads=2, d_ff=2 * d_model, max_seq=max_seq,
                      d_g=8, g_heads=2, seed=seed, **kw)
    return vocab, init_params(cfg, dtype)


CRITERIA: dict[int, str] = {}


def record_criterion(k: int, name: str, ok: bool, detail: str) -> None:
    """Keep one verdict line per acceptance criterion for the end-of-run summary."""
    CRITERIA[k] = f"CRITERION {k:>2} {name:<26} {'PASS' if ok else 'FAIL'}  {detail}"
    print(CRITERIA[k])


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[k])
