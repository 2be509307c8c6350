"""Bracketed corpora and parse/reference consistency.

Records look like ``[N It_PPH1 N] [V indicates_VVZ ... V]``: a constituent
opens with ``[Label`` and closes with ``Label]`` (or a bare ``]``); leaves
are ``word_TAG``.  Records are separated by blank lines.  A record whose top
level holds more than one item is wrapped in a synthetic ``ROOT`` that takes
no part in consistency checks.  ``@`` discontinuity markers are dropped.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

ROOT_LABEL = "ROOT"


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Leaf:
    word: str
    tag: str
    start: int

    @property
    def end(self):
        return self.start + 1


@dataclass(frozen=True)
class RefTree:
    label: str
    children: tuple
    start: int
    end: int
    synthetic: bool = False

    def leaves(self):
        for c in self.children:
            if isinstance(c, Leaf):
                yield c
            else:
                yield from c.leaves()

    def words(self):
        return tuple(leaf.word for leaf in self.leaves())

    def subtrees(self):
        yield self
        for c in self.children:
            if isinstance(c, RefTree):
                yield from c.subtrees()


class LabelMap:
    """Many-to-one map from grammar mnemonic ids to treebank labels.

    A mnemonic mapped to ``None`` is erased: it contributes no bracket, and its
    children count as children of its parent.  With ``identity=True`` unmapped
    labels map to themselves.
    """

    def __init__(self, mapping=None, identity=False):
        self.mapping = dict(mapping or {})
        self.identity = identity

    def __call__(self, label):
        if label in self.mapping:
            return self.mapping[label]
        if self.identity:
            return label
        raise KeyError(f"label map has no entry for {label!r}")

    def __eq__(self, other):
        return isinstance(other, LabelMap) and (self.mapping, self.identity) == (other.mapping, other.identity)

    @classmethod
    def load(cls, path):
        mapping = {}
        identity = False
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.split("//", 1)[0].strip()
            if not line:
                continue
            if line == "*identity*":
                identity = True
                continue
            parts = line.split()
            if len(parts) != 2:
                raise CorpusError(f"line {lineno}: expected 'mnemonic label'")
            mapping[parts[0]] = None if parts[1] == "-" else parts[1]
        return cls(mapping, identity)

    def dump(self, path):
        lines = ["*identity*"] if self.identity else []
        lines += [f"{k} {'-' if v is None else v}" for k, v in sorted(self.mapping.items())]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- reading ------------------------------------------------------------------

def _tokens(text):
    for tok in text.split():
        tok = tok.strip("@")
        if tok:
            yield tok


def parse_record(text):
    """Parse one bracketed record into a RefTree."""
    stack = [[]]
    labels = []
    pos = 0
    for tok in _tokens(text):
        if tok.startswith("["):
            label = tok[1:]
            if not label:
                raise CorpusError("opening bracket without a label")
            labels.append((label, pos))
            stack.append([])
        elif tok.endswith("]"):
            label = tok[:-1]
            if not labels:
                raise CorpusError(f"unbalanced brackets: unexpected {tok!r}")
            open_label, start = labels.pop()
            if label and label != open_label:
                raise CorpusError(f"unbalanced brackets: {open_label!r} closed by {tok!r}")
            children = stack.pop()
            if not children:
                raise CorpusError(f"empty constituent {open_label!r}")
            stack[-1].append(RefTree(open_label, tuple(children), start, pos))
        else:
            word, sep, tag = tok.rpartition("_")
            if not sep or not word:
                raise CorpusError(f"tag/word separator missing in {tok!r}")
            stack[-1].append(Leaf(word, tag, pos))
            pos += 1
    if labels:
        raise CorpusError(f"unbalanced brackets: {labels[-1][0]!r} never closed")
    top = stack[0]
    if not any(isinstance(c, RefTree) for c in top):
        raise CorpusError("a record must have a root constituent")
    if len(top) == 1:
        return top[0]
    return RefTree(ROOT_LABEL, tuple(top), 0, pos, synthetic=True)


def _records(text):
    block = []
    for line in text.splitlines():
        if line.strip():
            block.append(line)
        elif block:
            yield "\n".join(block)
            block = []
    if block:
        yield "\n".join(block)


def read_corpus(path):
    """Read a bracketed corpus; returns a list of ``(tokens, RefTree)`` pairs."""
    out = []
    for i, rec in enumerate(_records(Path(path).read_text(encoding="utf-8")), 1):
        try:
            tree = parse_record(rec)
        except CorpusError as e:
            raise CorpusError(f"record {i}: {e}") from None
        out.append((tree.words(), tree))
    return out


# -- writing ------------------------------------------------------------------

def format_reftree(tree):
    if isinstance(tree, Leaf):
        return f"{tree.word}_{tree.tag}"
    inner = " ".join(format_reftree(c) for c in tree.children)
    if tree.synthetic:
        return inner
    return f"[{tree.label} {inner} {tree.label}]"


def write_corpus(corpus, path):
    text = "\n\n".join(format_reftree(tree) for _, tree in corpus)
    Path(path).write_text(text + "\n" if text else "", encoding="utf-8")


# -- consistency --------------------------------------------------------------

def _visible_nodes(tree, labelmap, is_candidate):
    """Yield ``(start, end, label)`` for bracket-bearing nodes in preorder."""
    if isinstance(tree, Leaf) or isinstance(tree, str):
        return
    if isinstance(tree, RefTree):
        if not tree.synthetic:
            label = labelmap(tree.label) if is_candidate else tree.label
            if label is not None:
                yield tree.start, tree.end, label
    else:
        # grammar parse: lexical nodes play the role of tags
        if not tree.production.lexical:
            label = labelmap(tree.production.lhs.mnemonic)
            if label is not None:
                yield tree.start, tree.end, label
    for c in tree.children:
        yield from _visible_nodes(c, labelmap, is_candidate)


def bracket_set(tree, labelmap, is_candidate=True, drop_full_span=False):
    """Map span -> label, keeping only the topmost label of unary chains."""
    out = {}
    for start, end, label in _visible_nodes(tree, labelmap, is_candidate):
        out.setdefault((start, end), label)
    if drop_full_span:
        out.pop((tree.start, tree.end), None)
    return out


def consistent(candidate, reference, labelmap, labeled=True):
    """True iff ``candidate`` brackets ``reference`` exactly (labels too if ``labeled``)."""
    if tuple(candidate.words()) != reference.words():
        raise ValueError("candidate and reference cover different token sequences")
    drop = reference.synthetic
    cand = bracket_set(candidate, labelmap, True, drop)
    ref = bracket_set(reference, labelmap, False, drop)
    if labeled:
        return cand == ref
    return cand.keys() == ref.keys()
