import pytest
from hypothesis import given, strategies as st

from graphllava.errors import EmptyCorpus, IdOutOfRange
from graphllava.tokenizer import BOS, EOS, PAD, RESERVED, UNK, Vocab, build_vocab, split_tokens, token_frequencies

WORDS = st.sampled_from(["Is", "there", "a", "cycle", "node", "12", "(", ",", ")", "###", "Yes", "."])


def test_split_rules():
    assert split_tokens("(0, 6) graph?") == ["(", "0", ",", "6", ")", "graph", "?"]
    assert split_tokens("### Yes.") == ["###", "Yes", "."]
    assert split_tokens("") == []


def test_reserved_ids():
    v = build_vocab(["a b", "a"])
    assert (PAD, EOS, UNK, BOS) == (0, 1, 2, 3)
    assert v.itos[:4] == RESERVED


def test_small_corpus():
    v = build_vocab(["a b", "a"])
    assert "a" in v.stoi and "b" in v.stoi
    assert token_frequencies(["a b", "a"])["a"] == 2
    # most frequent corpus token first after the forced set
    assert v.stoi["a"] < v.stoi["b"]


def test_build_is_deterministic():
    corpus = ["x y z", "z y", "w"]
    assert build_vocab(corpus).itos == build_vocab(corpus).itos


def test_empty_corpus():
    with pytest.raises(EmptyCorpus):
        build_vocab([])


def test_max_size_truncates():
    v = build_vocab(["p q r s t"], max_size=110, forced=())
    assert v.size == 9 and v.itos[4:] == ("p", "q", "r", "s", "t")
    v = build_vocab(["p p q r"], max_size=6, forced=())
    assert v.itos[4:] == ("p", "q")


def test_encode_decode():
    v = build_vocab(["Is there a cycle in this graph?"])
    assert v.encode("") == []
    text = "Is there a cycle in this graph ?"
    assert v.decode(v.encode(text)) == text
    assert v.encode("unseen") == [UNK]
    with pytest.raises(IdOutOfRange):
        v.decode([v.size])
    assert v.decode([BOS, v.stoi["Is"], EOS], skip_reserved=True) == "Is"


def test_save_load(tmp_path):
    v = build_vocab(["alpha beta", "gamma"])
    v.save(tmp_path / "v.txt")
    assert Vocab.load(tmp_path / "v.txt") == v


@given(st.lists(WORDS, max_size=30))
def test_roundtrip_property(words):
    v = build_vocab(["Is there a cycle node 12 ( , ) ### Yes ."])
    text = " ".join(words)
    ids = v.encode(text)
    assert len(ids) == len(split_tokens(text))
    assert v.decode(ids) == " ".join(split_tokens(text))


@given(st.lists(st.text(min_size=1, max_size=8), min_size=1, max_size=10))
def test_reserved_never_collide(corpus):
    v = build_vocab(corpus)
    for tok in RESERVED:
        assert v.stoi[tok] == RESERVED.index(tok)
    assert all(i >= 4 or i == UNK for t in corpus for i in v.encode(t))
