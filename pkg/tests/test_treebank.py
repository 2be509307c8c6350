import pytest
from hypothesis import given, settings, strategies as st

from hbgparse.treebank import (CorpusError, LabelMap, Leaf, RefTree, bracket_set, consistent,
                               format_reftree, parse_record, read_corpus, write_corpus)
from helpers import FIXTURES


def test_single_constituent():
    t = parse_record("[N It_PPH1 N]")
    assert t.label == "N"
    assert t.children == (Leaf("It", "PPH1", 0),)
    assert (t.start, t.end) == (0, 1)


def test_bare_word_rejected():
    with pytest.raises(CorpusError, match="root constituent"):
        parse_record("It_PPH1")


@pytest.mark.parametrize("text, message", [
    ("[N It_PPH1", "never closed"),
    ("[N It_PPH1 V]", "closed by"),
    ("It_PPH1 N]", "unexpected"),
    ("[N N]", "empty constituent"),
    ("[N It N]", "separator missing"),
])
def test_malformed_records(text, message):
    with pytest.raises(CorpusError, match=message):
        parse_record(text)


def test_nested_sample_record():
    (tokens, tree), = read_corpus(FIXTURES / "nested_sample.txt")
    # the final full stop sits outside the two top-level constituents
    assert tree.synthetic
    bracketed = [c for c in tree.children if isinstance(c, RefTree)]
    assert [c.label for c in bracketed] == ["N", "V"]
    assert sum(len(list(c.leaves())) for c in bracketed) == 19
    assert len(tokens) == 20 and tokens[-1] == "."
    labels = {t.label for t in tree.subtrees()}
    assert {"Fn", "Fn&", "Fn+", "Fr", "Ti"} <= labels
    # spans tile their parents
    for node in tree.subtrees():
        pos = node.start
        for c in node.children:
            assert c.start == pos
            pos = c.end
        assert pos == node.end


def test_discontinuity_markers_ignored():
    a = parse_record("[S [N a_X N]@ [V b_Y V] S]")
    b = parse_record("[S [N a_X N] @[V b_Y V] S]")
    assert a == b


def _three_token(labels=("S", "A", "B")):
    s, a, b = labels
    return parse_record(f"[{s} [{a} x_T y_T {a}] [{b} z_T {b}] {s}]")


def test_consistent_identity():
    t = _three_token()
    ident = LabelMap(identity=True)
    assert consistent(t, t, ident, labeled=True)
    assert consistent(t, t, ident, labeled=False)


def test_relabeled_constituent():
    ident = LabelMap(identity=True)
    ref = _three_token()
    cand = _three_token(("S", "A", "C"))
    assert consistent(cand, ref, ident, labeled=False)
    assert not consistent(cand, ref, ident, labeled=True)


def test_flat_vs_binary():
    ident = LabelMap(identity=True)
    flat = parse_record("[S x_T y_T z_T S]")
    binary = parse_record("[S [A x_T y_T A] z_T S]")
    assert not consistent(flat, binary, ident, labeled=True)
    assert not consistent(flat, binary, ident, labeled=False)


def test_token_mismatch():
    with pytest.raises(ValueError):
        consistent(parse_record("[S a_T S]"), parse_record("[S b_T S]"), LabelMap(identity=True))


def test_unary_chain_collapses_to_top_label():
    t = parse_record("[S [NP [N x_T N] NP] S]")
    assert bracket_set(t, LabelMap(identity=True), is_candidate=False) == {(0, 1): "S"}


def test_labelmap_erasure_and_file_round_trip(tmp_path):
    m = LabelMap({"NP*": "N", "NBAR": None}, identity=True)
    assert m("NP*") == "N" and m("NBAR") is None and m("VP") == "VP"
    m.dump(tmp_path / "map.txt")
    assert LabelMap.load(tmp_path / "map.txt") == m
    with pytest.raises(KeyError):
        LabelMap({"a": "b"})("c")


# -- properties ---------------------------------------------------------------------

LABELS = st.sampled_from(["S", "N", "V", "P"])


@st.composite
def reftrees(draw, start=0, depth=0):
    label = draw(LABELS)
    n = draw(st.integers(1, 3))
    children = []
    pos = start
    for _ in range(n):
        if depth < 3 and draw(st.booleans()):
            child = draw(reftrees(start=pos, depth=depth + 1))
        else:
            child = Leaf(draw(st.sampled_from(["a", "b", "c"])), "T", pos)
        children.append(child)
        pos = child.end
    return RefTree(label, tuple(children), start, pos)


@settings(max_examples=100, deadline=None)
@given(reftrees())
def test_reflexive(t):
    assert consistent(t, t, LabelMap(identity=True), labeled=True)


@settings(max_examples=100, deadline=None)
@given(reftrees(), st.data())
def test_labeled_implies_unlabeled(t, data):
    # relabel a random subset of nodes, keeping the tokens
    def relabel(node):
        if isinstance(node, Leaf):
            return node
        label = data.draw(LABELS) if data.draw(st.booleans()) else node.label
        return RefTree(label, tuple(relabel(c) for c in node.children), node.start, node.end)

    other = relabel(t)
    ident = LabelMap(identity=True)
    if consistent(other, t, ident, labeled=True):
        assert consistent(other, t, ident, labeled=False)


@settings(max_examples=50, deadline=None)
@given(st.lists(reftrees(), min_size=0, max_size=4))
def test_write_read_round_trip(tmp_path_factory, trees):
    path = tmp_path_factory.mktemp("corpus") / "c.txt"
    corpus = [(t.words(), t) for t in trees]
    write_corpus(corpus, path)
    assert read_corpus(path) == corpus
    for t in trees:
        assert parse_record(format_reftree(t)) == t
